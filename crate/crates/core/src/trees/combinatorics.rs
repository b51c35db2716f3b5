//! Counting and probability laws for strategy-B genealogies with a single
//! power `m`, and the cost model built on them.

use crate::error::{Error, Result};
use crate::sde::expected_step;

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1) after the multiplication.
        c = c.checked_mul(n - i)? / (i + 1);
    }
    Some(c)
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

/// Binary trees with `k` leaves: `C(2k-2, k-1) / k`.
pub fn count_diagrams_binary(k: u64) -> Result<u128> {
    if k == 0 {
        return Err(Error::InvalidArgument("leaf count must be positive".into()));
    }
    let n = 2 * k as u128 - 2;
    binomial(n, k as u128 - 1)
        .map(|c| c / k as u128)
        .ok_or_else(|| Error::InvalidArgument(format!("binary diagram count overflows at k = {k}")))
}

/// Ordered `m`-ary trees with `ne` internal nodes (Fuss–Catalan):
/// `C(ne·m + 1, ne) / (ne·m + 1)`.
pub fn count_diagrams(ne: u64, m: u64) -> Result<u128> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("arity must be at least 2, got {m}")));
    }
    let n = ne as u128 * m as u128 + 1;
    binomial(n, ne as u128)
        .map(|c| c / n)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("diagram count overflows at ne = {ne}, m = {m}"))
        })
}

/// Probability that a strategy-B tree with single power `m` has `ne`
/// splitting events: `q^k (1-q)^ne N_D(ne, m)` with `k = (m-1) ne + 1`.
pub fn tree_probability(ne: u64, m: u64, q: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("arity must be at least 2, got {m}")));
    }
    let q_min = (m as f64 - 1.0) / m as f64;
    if !(q >= q_min - 1e-12 && q <= 1.0) {
        return Err(Error::InadmissibleQ { q, q_min });
    }
    if ne == 0 {
        return Ok(q);
    }
    if q == 1.0 {
        return Ok(0.0);
    }
    let k = (m - 1) * ne + 1;
    let ln_count = ln_binomial(ne * m + 1, ne) - ((ne * m + 1) as f64).ln();
    Ok((k as f64 * q.ln() + ne as f64 * (1.0 - q).ln() + ln_count).exp())
}

/// Mean leaf count `q / (1 - m(1-q))`, finite only above `q = (m-1)/m`.
pub fn mean_branches(m: u64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("q must lie in (0, 1], got {q}")));
    }
    let den = 1.0 - m as f64 * (1.0 - q);
    if den <= 0.0 {
        return Err(Error::Singular { m: m as u32, q });
    }
    Ok(q / den)
}

/// Upper bound on strategy-B wall time for `n` trees:
/// `n · t_c · (t / expected_step) · <k>`.
pub fn estimate_tb(n: u64, t: f64, dt: f64, t_c: f64, m: u64, q: f64) -> Result<f64> {
    let steps = t / expected_step(dt, t)?;
    Ok(n as f64 * t_c * steps * mean_branches(m, q)?)
}
