use proptest::prelude::*;
use treepde::estimator::{sample_series, EstimatorConfig};
use treepde::pade::{build_pade, sum_series, sum_series_with_order};
use treepde::problem::BuiltinProblem;
use treepde::rng::RngStream;
use treepde::trees::Strategy as TreeStrategy;

/// First `n` Taylor coefficients of `P/Q` with `Q(0) = 1`.
fn taylor(p: &[f64], q: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n];
    for k in 0..n {
        let mut v = p.get(k).copied().unwrap_or(0.0);
        for j in 1..q.len().min(k + 1) {
            v -= q[j] * c[k - j];
        }
        c[k] = v;
    }
    c
}

fn rational_at_one(p: &[f64], q: &[f64]) -> f64 {
    p.iter().sum::<f64>() / q.iter().sum::<f64>()
}

fn rational() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (0usize..4, 1usize..4).prop_flat_map(|(l, m)| {
        (
            prop::collection::vec(-2.0f64..2.0, l + 1),
            // |q_j| < 0.9/m keeps Q away from zero on [0, 1]
            prop::collection::vec(-0.9f64..0.9, m).prop_map(move |v| {
                let mut q = vec![1.0];
                q.extend(v.iter().map(|x| x / m as f64));
                q
            }),
        )
    })
}

proptest! {
    #[test]
    fn explicit_order_reconstructs_rationals((p, q) in rational(), extra in 0usize..3) {
        let (l, m) = (p.len() - 1, q.len() - 1);
        let exact = rational_at_one(&p, &q);
        let c = taylor(&p, &q, l + m + 1 + extra);
        let approx = build_pade(&c, l, m).unwrap();
        let v = approx.eval(1.0).unwrap();
        prop_assert!((v - exact).abs() <= 1e-10 * exact.abs().max(1.0), "{} vs {}", v, exact);
    }

    #[test]
    fn near_diagonal_sum_reconstructs_rationals((p, q) in rational(), extra in 0usize..3) {
        let (l, m) = (p.len() - 1, q.len() - 1);
        // the default order [⌈K/2⌉/⌊K/2⌋] must dominate (L, M)
        let k = 2 * l.max(m) + extra;
        let exact = rational_at_one(&p, &q);
        let c = taylor(&p, &q, k + 1);
        let (v, _) = sum_series(&c).unwrap();
        prop_assert!((v - exact).abs() <= 1e-10 * exact.abs().max(1.0), "{} vs {}", v, exact);
    }
}

#[test]
fn grandi_and_exp_fixtures() {
    let (v, _) = sum_series(&[1.0, -1.0, 1.0, -1.0, 1.0]).unwrap();
    assert!((v - 0.5).abs() < 1e-12);
    let exp: Vec<f64> = (0..5).scan(1.0, |f, n| {
        let v = 1.0 / *f;
        *f *= (n + 1) as f64;
        Some(v)
    })
    .collect();
    let (v, d) = sum_series_with_order(&exp, Some((2, 2))).unwrap();
    assert_eq!(d.order, (2, 2));
    assert!((v - 19.0 / 7.0).abs() < 1e-6);
}

#[test]
fn perturbation_stability_on_ex1_series() {
    let p = BuiltinProblem::Ex1.problem();
    let mut cfg = EstimatorConfig::new(TreeStrategy::B { q: 0.5 }, 200_000);
    cfg.seed = 31;
    let c = sample_series(&p, [0.0, 0.0], 0.5, &cfg).unwrap().coefficients();
    assert_eq!(c.len(), 4);
    let (base, _) = sum_series(&c).unwrap();
    let eps = 1e-3 * c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = RngStream::new(77, 0);
    let mut batch = || {
        (0..100)
            .map(|_| {
                let cp: Vec<f64> = c.iter().map(|v| v + eps * (2.0 * rng.uniform() - 1.0)).collect();
                (sum_series(&cp).unwrap().0 - base).abs() / eps
            })
            .fold(0.0, f64::max)
    };
    let (k1, k2) = (batch(), batch());
    assert!(k1.is_finite() && k2.is_finite());
    assert!(k1 < 1e3 && k2 < 1e3, "{k1} {k2}");
    assert!(k1 / k2 < 2.0 && k2 / k1 < 2.0, "{k1} {k2}");
}
