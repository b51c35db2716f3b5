//! Padé approximants and Padé summation of (possibly divergent) series.
//!
//! The branch-series coefficients `a_n` are read as Taylor coefficients of an
//! auxiliary variable `z`; the series "sum" is the value of its near-diagonal
//! `[L/M]` approximant at `z = 1`.

use crate::error::{Error, Result};

/// Condition-number estimate above which the denominator system is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// `P(z)/Q(z)` with `Q(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PadeApproximant {
    /// `p_0..p_L`.
    pub numerator: Vec<f64>,
    /// `q_0 = 1, q_1..q_M`.
    pub denominator: Vec<f64>,
    /// Max violation of the order-matching conditions through order `L+M`.
    pub residual: f64,
    /// 1-norm condition estimate of the denominator system (1 when `M = 0`).
    pub condition: f64,
}

impl PadeApproximant {
    pub fn l(&self) -> usize {
        self.numerator.len() - 1
    }

    pub fn m(&self) -> usize {
        self.denominator.len() - 1
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        let p = horner(&self.numerator, z);
        let q = horner(&self.denominator, z);
        if q == 0.0 || q.abs() < 1e-14 * p.abs() {
            return Err(Error::Pole { z });
        }
        Ok(p / q)
    }

    /// Real zeros of the denominator in `(lo, hi]`.
    pub fn denominator_roots(&self, lo: f64, hi: f64) -> Vec<f64> {
        real_roots(&self.denominator, lo, hi)
    }
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

/// Real roots of a polynomial in `(lo, hi]` by sign-change scanning with
/// bisection; touching zeros are caught as grid points where `|p|` nearly
/// vanishes relative to the coefficient scale.
fn real_roots(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    const SAMPLES: usize = 2000;
    let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if coeffs.len() < 2 || scale == 0.0 {
        return Vec::new();
    }
    let f = |z: f64| horner(coeffs, z);
    let mut roots: Vec<f64> = Vec::new();
    let h = (hi - lo) / SAMPLES as f64;
    let mut prev_z = lo;
    let mut prev = f(lo);
    for i in 1..=SAMPLES {
        let z = lo + h * i as f64;
        let v = f(z);
        if v == 0.0 || v.abs() < 1e-12 * scale {
            roots.push(z);
        } else if prev != 0.0 && prev.signum() != v.signum() {
            let (mut a, mut b, mut fa) = (prev_z, z, prev);
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_z = z;
        prev = v;
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 2.0 * h);
    roots
}

/// Dense LU with partial pivoting, returning the solution and a 1-norm
/// condition estimate computed from the explicit inverse.
fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = b.len();
    let mut lu: Vec<Vec<f64>> = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let norm_a = (0..n)
        .map(|j| (0..n).map(|i| a[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| lu[i][col].abs().total_cmp(&lu[j][col].abs()))
            .unwrap_or(col);
        if lu[piv][col] == 0.0 {
            return Err(Error::SingularMatrix { pivot: col });
        }
        lu.swap(col, piv);
        perm.swap(col, piv);
        for row in col + 1..n {
            let factor = lu[row][col] / lu[col][col];
            lu[row][col] = factor;
            for k in col + 1..n {
                lu[row][k] -= factor * lu[col][k];
            }
        }
    }
    let substitute = |rhs: &[f64]| -> Vec<f64> {
        let mut y: Vec<f64> = perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            for k in 0..i {
                y[i] -= lu[i][k] * y[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= lu[i][k] * y[k];
            }
            y[i] /= lu[i][i];
        }
        y
    };
    let mut norm_inv = 0.0f64;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = substitute(&e);
        norm_inv = norm_inv.max(col.iter().map(|v| v.abs()).sum());
    }
    Ok((substitute(b), norm_a * norm_inv))
}

/// `[L/M]` approximant from `c_0..c_K`, `L + M ≤ K`.
pub fn build_pade(c: &[f64], l: usize, m: usize) -> Result<PadeApproximant> {
    if c.is_empty() || l + m >= c.len() {
        return Err(Error::InvalidArgument(format!(
            "[{l}/{m}] needs {} coefficients, got {}",
            l + m + 1,
            c.len()
        )));
    }
    if let Some(bad) = c.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("series coefficient {bad}")));
    }
    let coef = |i: isize| if i < 0 { 0.0 } else { c[i as usize] };
    let mut denominator = vec![1.0];
    let mut condition = 1.0;
    if m > 0 {
        // Σ_{j=1..M} q_j c_{L+i-j} = -c_{L+i},  i = 1..M
        let a: Vec<Vec<f64>> = (1..=m)
            .map(|i| (1..=m).map(|j| coef((l + i) as isize - j as isize)).collect())
            .collect();
        let b: Vec<f64> = (1..=m).map(|i| -c[l + i]).collect();
        let degenerate = |condition| Error::DegeneratePade { l, m, condition };
        let (q, cond) = solve_dense(&a, &b).map_err(|_| degenerate(f64::INFINITY))?;
        if !(cond <= MAX_CONDITION) {
            return Err(degenerate(cond));
        }
        condition = cond;
        denominator.extend(q);
    }
    let numerator: Vec<f64> = (0..=l)
        .map(|i| {
            (0..=i.min(m))
                .map(|j| denominator[j] * c[i - j])
                .sum()
        })
        .collect();
    let residual = (0..=l + m)
        .map(|i| {
            let p = if i <= l { numerator[i] } else { 0.0 };
            let qc: f64 = (0..=i.min(m)).map(|j| denominator[j] * c[i - j]).sum();
            (p - qc).abs()
        })
        .fold(0.0, f64::max);
    Ok(PadeApproximant {
        numerator,
        denominator,
        residual,
        condition,
    })
}

pub fn eval_pade(p: &PadeApproximant, z: f64) -> Result<f64> {
    p.eval(z)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PadeDiagnostics {
    /// Order actually used.
    pub order: (usize, usize),
    /// Real denominator roots in `(0, 1]`.
    pub poles: Vec<f64>,
    /// `|[⌈K/2⌉/⌊K/2⌋](1) - [⌊K/2⌋/⌈K/2⌉](1)|` for odd `K`; for even `K`
    /// the diagonal value against `[K/2 / K/2-1]`. `None` when unavailable.
    pub spread: Option<f64>,
    /// Orders skipped because their tables were degenerate.
    pub degenerate: Vec<(usize, usize)>,
}

impl PadeDiagnostics {
    pub fn has_pole(&self) -> bool {
        !self.poles.is_empty()
    }

    pub fn fell_back(&self) -> bool {
        !self.degenerate.is_empty()
    }
}

fn near_diagonal(n: usize) -> (usize, usize) {
    (n.div_ceil(2), n / 2)
}

fn value_at_one(c: &[f64], l: usize, m: usize) -> Option<f64> {
    build_pade(c, l, m).ok().and_then(|p| p.eval(1.0).ok())
}

/// Padé sum at `z = 1` with the near-diagonal order for `K = c.len() - 1`,
/// falling back to lower total orders when the table is degenerate.
pub fn sum_series(c: &[f64]) -> Result<(f64, PadeDiagnostics)> {
    sum_series_with_order(c, None)
}

/// As [`sum_series`], with an explicit `[L/M]` override.
pub fn sum_series_with_order(c: &[f64], order: Option<(usize, usize)>) -> Result<(f64, PadeDiagnostics)> {
    if c.is_empty() {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    let k = c.len() - 1;
    let mut diag = PadeDiagnostics::default();
    if k == 0 {
        diag.order = (0, 0);
        return Ok((c[0], diag));
    }
    let candidates: Vec<(usize, usize)> = match order {
        Some((l, m)) => {
            if l + m > k {
                return Err(Error::InvalidArgument(format!(
                    "[{l}/{m}] needs {} coefficients, got {}",
                    l + m + 1,
                    c.len()
                )));
            }
            let mut v = vec![(l, m)];
            v.extend((0..l + m).rev().map(near_diagonal));
            v
        }
        None => (0..=k).rev().map(near_diagonal).collect(),
    };
    let mut chosen = None;
    for (l, m) in candidates {
        match build_pade(c, l, m) {
            Ok(p) => {
                chosen = Some(p);
                break;
            }
            Err(Error::DegeneratePade { .. }) => diag.degenerate.push((l, m)),
            Err(e) => return Err(e),
        }
    }
    let approx = chosen.ok_or_else(|| Error::DegeneratePade {
        l: 0,
        m: 0,
        condition: f64::INFINITY,
    })?;
    diag.order = (approx.l(), approx.m());
    diag.poles = approx.denominator_roots(0.0, 1.0);
    let value = approx.eval(1.0)?;

    let n = approx.l() + approx.m();
    let alternative = if n % 2 == 1 {
        (n / 2, n.div_ceil(2))
    } else if n >= 2 {
        (n / 2, n / 2 - 1)
    } else {
        (0, 0)
    };
    if n >= 1 && alternative != diag.order {
        diag.spread = value_at_one(c, alternative.0, alternative.1).map(|v| (v - value).abs());
    }
    Ok((value, diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_coeffs() -> Vec<f64> {
        vec![1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0]
    }

    #[test]
    fn exp_two_two() {
        let c = exp_coeffs();
        let p = build_pade(&c, 2, 2).unwrap();
        assert!((p.eval(1.0).unwrap() - 19.0 / 7.0).abs() < 1e-12);
        assert!(p.residual <= 1e-10 * 1.0);
        assert!((p.numerator[1] - 0.5).abs() < 1e-14);
        assert!((p.denominator[1] + 0.5).abs() < 1e-14);
        assert!((p.numerator[2] - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn zero_denominator_order_is_truncated_series() {
        let c = exp_coeffs();
        let p = build_pade(&c, 4, 0).unwrap();
        assert_eq!(p.numerator, c);
        assert_eq!(p.denominator, vec![1.0]);
        assert!((p.eval(0.5).unwrap() - c.iter().rev().fold(0.0, |a, x| a * 0.5 + x)).abs() < 1e-15);
    }

    #[test]
    fn geometric_is_one_over_one_plus_z() {
        let c = [1.0, -1.0];
        let p = build_pade(&c, 0, 1).unwrap();
        assert_eq!(p.numerator, vec![1.0]);
        assert_eq!(p.denominator, vec![1.0, 1.0]);
        assert_eq!(p.eval(1.0).unwrap(), 0.5);
        assert_eq!(p.eval(0.0).unwrap(), 1.0);
    }

    #[test]
    fn value_at_zero_is_c0() {
        let c = [0.3, -1.2, 2.5, 0.7, -0.1];
        let p = build_pade(&c, 2, 2).unwrap();
        assert!((p.eval(0.0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn pole_is_reported() {
        let p = build_pade(&[1.0, -1.0], 0, 1).unwrap();
        assert!(matches!(p.eval(-1.0), Err(Error::Pole { .. })));
    }

    #[test]
    fn too_few_coefficients() {
        assert!(build_pade(&[1.0, 2.0], 1, 1).is_err());
    }

    #[test]
    fn singular_table_is_degenerate() {
        let c = [1.0, -1.0, 1.0, -1.0, 1.0];
        assert!(matches!(build_pade(&c, 2, 2), Err(Error::DegeneratePade { .. })));
    }

    #[test]
    fn single_coefficient_series() {
        let (v, d) = sum_series(&[2.5]).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(d.order, (0, 0));
        assert!(!d.has_pole() && !d.fell_back());
    }

    #[test]
    fn grandi_series() {
        let c: Vec<f64> = (0..6).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (v, d) = sum_series(&c).unwrap();
        assert_eq!(v, 0.5);
        assert!(!d.has_pole());
        assert!(d.fell_back());
    }

    #[test]
    fn divergent_geometric() {
        let c: Vec<f64> = (0..5).map(|n| (-2.0f64).powi(n)).collect();
        let (v, d) = sum_series(&c).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-10);
        assert!(!d.has_pole());
    }

    #[test]
    fn pole_in_unit_interval_is_flagged() {
        // 1/(1 - 2z): pole at z = 1/2
        let c: Vec<f64> = (0..4).map(|n| 2.0f64.powi(n)).collect();
        let (v, d) = sum_series(&c).unwrap();
        assert!((v + 1.0).abs() < 1e-10);
        assert_eq!(d.poles.len(), 1);
        assert!((d.poles[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn explicit_order_override() {
        let c = exp_coeffs();
        let (v, d) = sum_series_with_order(&c, Some((4, 0))).unwrap();
        assert_eq!(d.order, (4, 0));
        assert!((v - (1.0 + 1.0 + 0.5 + 1.0 / 6.0 + 1.0 / 24.0)).abs() < 1e-14);
        assert!(sum_series_with_order(&c, Some((3, 3))).is_err());
    }

    #[test]
    fn spread_compares_neighbouring_orders() {
        let c = exp_coeffs();
        let (v, d) = sum_series(&c).unwrap();
        let alt = build_pade(&c, 2, 1).unwrap().eval(1.0).unwrap();
        assert!((d.spread.unwrap() - (v - alt).abs()).abs() < 1e-15);
    }
}
