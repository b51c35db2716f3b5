//! Not-a-knot cubic splines in one variable and their tensor product in two.

use crate::error::{Error, Result};

/// Cubic spline stored through its second derivatives `M_i` at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline1D {
    nodes: Vec<f64>,
    values: Vec<f64>,
    m: Vec<f64>,
}

/// Thomas algorithm; `a` is the sub-, `b` the main and `c` the super-diagonal.
fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut denom = b[0];
    if denom == 0.0 {
        return Err(Error::SingularMatrix { pivot: 0 });
    }
    cp[0] = c[0] / denom;
    dp[0] = d[0] / denom;
    for i in 1..n {
        denom = b[i] - a[i] * cp[i - 1];
        if denom == 0.0 {
            return Err(Error::SingularMatrix { pivot: i });
        }
        cp[i] = c[i] / denom;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Ok(x)
}

impl Spline1D {
    pub fn new(nodes: &[f64], values: &[f64]) -> Result<Self> {
        let n = nodes.len();
        if n < 4 {
            return Err(Error::InvalidArgument(format!(
                "not-a-knot spline needs at least 4 nodes, got {n}"
            )));
        }
        if values.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{n} nodes but {} values",
                values.len()
            )));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("spline nodes must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spline values".into()));
        }
        let h: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1).map(|i| (values[i + 1] - values[i]) / h[i]).collect();

        // Unknowns M_1..M_{n-2}; M_0 and M_{n-1} follow from third-derivative
        // continuity across nodes 1 and n-2.
        let k = n - 2;
        let mut a = vec![0.0; k];
        let mut b = vec![0.0; k];
        let mut c = vec![0.0; k];
        let mut d = vec![0.0; k];
        for r in 0..k {
            let i = r + 1;
            a[r] = h[i - 1];
            b[r] = 2.0 * (h[i - 1] + h[i]);
            c[r] = h[i];
            d[r] = 6.0 * (slope[i] - slope[i - 1]);
        }
        let (h0, h1) = (h[0], h[1]);
        b[0] += h0 + h0 * h0 / h1;
        c[0] -= h0 * h0 / h1;
        let (hl, hp) = (h[n - 2], h[n - 3]);
        b[k - 1] += hl + hl * hl / hp;
        a[k - 1] -= hl * hl / hp;
        let inner = solve_tridiagonal(&a, &b, &c, &d)?;
        let mut m = Vec::with_capacity(n);
        m.push(inner[0] * (1.0 + h0 / h1) - h0 / h1 * inner[1]);
        m.extend_from_slice(&inner);
        m.push(inner[k - 1] * (1.0 + hl / hp) - hl / hp * inner[k - 2]);
        Ok(Self {
            nodes: nodes.to_vec(),
            values: values.to_vec(),
            m,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn range(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    /// Errors outside `[x_0, x_{n-1}]` (up to a relative rounding slack).
    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        let slack = 1e-12 * (hi - lo);
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(Error::OutOfRange { value: x, lo, hi });
        }
        let x = x.clamp(lo, hi);
        let i = match self.nodes.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i - 1,
        };
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let (l, r) = (x1 - x, x - x0);
        Ok(self.m[i] * l * l * l / (6.0 * h)
            + self.m[i + 1] * r * r * r / (6.0 * h)
            + (self.values[i] / h - self.m[i] * h / 6.0) * l
            + (self.values[i + 1] / h - self.m[i + 1] * h / 6.0) * r)
    }
}

pub fn build_spline(nodes: &[f64], values: &[f64]) -> Result<Spline1D> {
    Spline1D::new(nodes, values)
}

/// Tensor-product spline on a `(y, t)` node grid: splines in `t` are built
/// once per `y` node; a query interpolates their values in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpline2D {
    ys: Vec<f64>,
    in_t: Vec<Spline1D>,
}

impl TensorSpline2D {
    /// `values[iy][it]`.
    pub fn new(ys: &[f64], ts: &[f64], values: &[Vec<f64>]) -> Result<Self> {
        if values.len() != ys.len() {
            return Err(Error::InvalidArgument(format!(
                "{} y nodes but {} value rows",
                ys.len(),
                values.len()
            )));
        }
        if ys.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "not-a-knot spline needs at least 4 nodes, got {}",
                ys.len()
            )));
        }
        let in_t = values
            .iter()
            .map(|row| Spline1D::new(ts, row))
            .collect::<Result<Vec<_>>>()?;
        // validates y ordering
        Spline1D::new(ys, &vec![0.0; ys.len()])?;
        Ok(Self { ys: ys.to_vec(), in_t })
    }

    /// The spline in `y` at a fixed `t`.
    pub fn slice_at_t(&self, t: f64) -> Result<Spline1D> {
        let column = self
            .in_t
            .iter()
            .map(|s| s.eval(t))
            .collect::<Result<Vec<_>>>()?;
        Spline1D::new(&self.ys, &column)
    }

    pub fn eval(&self, y: f64, t: f64) -> Result<f64> {
        self.slice_at_t(t)?.eval(y)
    }
}

pub fn eval_spline(s: &Spline1D, x: f64) -> Result<f64> {
    s.eval(x)
}

pub fn eval_tensor(s: &TensorSpline2D, y: f64, t: f64) -> Result<f64> {
    s.eval(y, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn reproduces_cubics() {
        let f = |x: f64| x * x * x - 2.0 * x;
        let xs = [-1.0, -0.3, 0.2, 0.9, 1.4, 2.0];
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let s = build_spline(&xs, &ys).unwrap();
        for x in linspace(-1.0, 2.0, 301) {
            assert!((s.eval(x).unwrap() - f(x)).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn four_nodes_is_the_interpolating_cubic() {
        let f = |x: f64| 0.5 - x + 3.0 * x * x - 0.25 * x * x * x;
        let xs = [0.0, 1.0, 1.5, 4.0];
        let s = build_spline(&xs, &xs.map(f)).unwrap();
        assert!((s.eval(2.7).unwrap() - f(2.7)).abs() < 1e-12);
    }

    #[test]
    fn constant_data() {
        let xs = linspace(0.0, 1.0, 7);
        let s = build_spline(&xs, &[4.2; 7]).unwrap();
        for x in linspace(0.0, 1.0, 50) {
            assert!((s.eval(x).unwrap() - 4.2).abs() < 1e-14);
        }
    }

    #[test]
    fn sine_accuracy() {
        let xs = linspace(0.0, std::f64::consts::PI, 21);
        let s = build_spline(&xs, &xs.iter().map(|x| x.sin()).collect::<Vec<_>>()).unwrap();
        let err = linspace(0.0, std::f64::consts::PI, 2001)
            .into_iter()
            .map(|x| (s.eval(x).unwrap() - x.sin()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-5, "{err}");
        let mid = 0.5 * (xs[3] + xs[4]);
        assert!((s.eval(mid).unwrap() - mid.sin()).abs() < 1e-5);
    }

    #[test]
    fn nodes_are_exact() {
        let xs = linspace(0.0, 2.0, 9);
        let vals: Vec<f64> = xs.iter().map(|x| (3.0 * x).cos()).collect();
        let s = build_spline(&xs, &vals).unwrap();
        for (x, v) in xs.iter().zip(&vals) {
            assert_eq!(s.eval(*x).unwrap(), *v);
        }
    }

    #[test]
    fn input_errors() {
        assert!(build_spline(&[0.0, 1.0, 2.0], &[0.0; 3]).is_err());
        assert!(build_spline(&[0.0, 2.0, 1.0, 3.0], &[0.0; 4]).is_err());
        assert!(build_spline(&[0.0, 1.0, 1.0, 3.0], &[0.0; 4]).is_err());
        let s = build_spline(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]).unwrap();
        assert!(matches!(s.eval(3.5), Err(Error::OutOfRange { .. })));
        assert!(s.eval(-0.1).is_err());
    }

    #[test]
    fn tensor_polynomial_reproduction() {
        let f = |y: f64, t: f64| y * y * y * t * t;
        let ys = linspace(-2.0, 2.0, 5);
        let ts = linspace(0.0, 1.0, 4);
        let values: Vec<Vec<f64>> = ys.iter().map(|&y| ts.iter().map(|&t| f(y, t)).collect()).collect();
        let s = TensorSpline2D::new(&ys, &ts, &values).unwrap();
        for y in linspace(-2.0, 2.0, 17) {
            for t in linspace(0.0, 1.0, 13) {
                assert!((s.eval(y, t).unwrap() - f(y, t)).abs() < 1e-10);
            }
        }
        assert!(s.eval(2.5, 0.5).is_err());
        assert!(s.eval(0.0, 1.5).is_err());
    }
}
