//! Band storage and LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout: entry `(i, j)` lives at row
//! `kl + ku + i - j` of column `j`, with `kl` spare rows on top for the
//! fill-in produced by row interchanges.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::new(n, 0, 0);
        for i in 0..n {
            a.set(i, i, 1.0);
        }
        a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics when `(i, j)` lies outside the declared band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band kl={}, ku={}", self.kl, self.ku);
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band kl={}, ku={}", self.kl, self.ku);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)].abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn factor(&self) -> Result<BandedLu> {
        let mut lu = self.clone();
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = j;
            let mut best = lu.data[lu.idx(j, j)].abs();
            for i in j + 1..=j + km {
                let v = lu.data[lu.idx(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivots[j] = p;
            if best == 0.0 {
                return Err(Error::SingularMatrix { pivot: j });
            }
            ju = ju.max((p + ku).min(n - 1));
            if p != j {
                for c in j..=ju {
                    let (a, b) = (lu.idx(j, c), lu.idx(p, c));
                    lu.data.swap(a, b);
                }
            }
            let inv = 1.0 / lu.data[lu.idx(j, j)];
            for i in j + 1..=j + km {
                let k = lu.idx(i, j);
                lu.data[k] *= inv;
            }
            for c in j + 1..=ju {
                let u = lu.data[lu.idx(j, c)];
                if u == 0.0 {
                    continue;
                }
                for i in j + 1..=j + km {
                    let l = lu.data[lu.idx(i, j)];
                    let k = lu.idx(i, c);
                    lu.data[k] -= l * u;
                }
            }
        }
        Ok(BandedLu { lu, pivots })
    }
}

/// Factors `P A = L U`; `U` has bandwidth `kl + ku`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.lu.n
    }

    /// Solves in place.
    pub fn solve(&self, b: &mut [f64]) {
        let a = &self.lu;
        let n = a.n;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                for i in j + 1..=(j + a.kl).min(n - 1) {
                    b[i] -= a.data[a.idx(i, j)] * bj;
                }
            }
        }
        let width = a.kl + a.ku;
        for j in (0..n).rev() {
            b[j] /= a.data[a.idx(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(width)..j {
                    b[i] -= a.data[a.idx(i, j)] * bj;
                }
            }
        }
    }
}

/// Factor-and-solve convenience wrapper.
pub fn banded_lu_solve(a: &BandedMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.n() {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has length {}, matrix has order {}",
            b.len(),
            a.n()
        )));
    }
    let lu = a.factor()?;
    let mut x = b.to_vec();
    lu.solve(&mut x);
    Ok(x)
}
