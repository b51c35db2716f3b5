//! Multiplicative functionals of sampled trees and the branch series built
//! from them.
//!
//! The Monte Carlo estimate is split by splitting-event count `Ne`:
//! `a_n = (1/N) Σ_{samples with Ne = n} F`, and the solution is the Padé sum
//! of `a_0, a_1, ...` at `z = 1`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pade::{sum_series_with_order, PadeDiagnostics};
use crate::problem::{Point, Problem};
use crate::rng::{mix64, RngStream};
use crate::sde::{BoxDomain, PathSimulator};
use crate::trees::{RandomTree, Strategy, TreeSampler, DEFAULT_NODE_CAP};

/// Samples per RNG block. Fixed so that results do not depend on how blocks
/// are spread over threads.
pub const BLOCK_SIZE: u64 = 4096;
pub const BOOTSTRAP_RESAMPLES: usize = 20;
const BOOTSTRAP_KEY: u64 = 0xb007_5743_a11c_e5e5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleValue {
    pub ne: usize,
    pub k: usize,
    pub functional: f64,
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn check_paths(tree: &RandomTree) -> Result<()> {
    if tree.has_paths {
        Ok(())
    } else {
        Err(Error::InvalidArgument("tree has no simulated paths".into()))
    }
}

fn leaf_product(p: &Problem, tree: &RandomTree, scale: f64) -> f64 {
    tree.leaves()
        .map(|n| p.initial_value(&n.position_at_event) * scale)
        .product()
}

/// Strategy A: `e^t Π_vertices (#terms) c_α(y, τ) e^{(α-1)τ} Π_leaves g(x)`,
/// with `τ` the horizon handed to the children. Absorbed trees give 0.
pub fn evaluate_sample_a(p: &Problem, tree: &RandomTree, t: f64) -> Result<SampleValue> {
    check_paths(tree)?;
    let value = if tree.absorbed {
        0.0
    } else {
        let n_terms = p.n_terms() as f64;
        let vertices: f64 = tree
            .vertices()
            .map(|n| {
                let tau = n.child_horizon();
                let c = p.terms[n.term as usize].coefficient.eval(&n.position_at_event, tau);
                n_terms * c * ((n.child_count as f64 - 1.0) * tau).exp()
            })
            .product();
        t.exp() * vertices * leaf_product(p, tree, 1.0)
    };
    Ok(SampleValue {
        ne: tree.ne,
        k: tree.k,
        functional: finite(value, "strategy-A functional")?,
    })
}

/// Strategy B: `Π_vertices τ_parent (#terms) c_α(y, τ_child)/(1-q) Π_leaves g(x)/q`.
pub fn evaluate_sample_b(p: &Problem, tree: &RandomTree, _t: f64, q: f64) -> Result<SampleValue> {
    check_paths(tree)?;
    let value = if tree.absorbed {
        0.0
    } else {
        let n_terms = p.n_terms() as f64;
        let vertices: f64 = tree
            .vertices()
            .map(|n| {
                let c = p.terms[n.term as usize]
                    .coefficient
                    .eval(&n.position_at_event, n.child_horizon());
                n.horizon * n_terms * c / (1.0 - q)
            })
            .product();
        vertices * leaf_product(p, tree, 1.0 / q)
    };
    Ok(SampleValue {
        ne: tree.ne,
        k: tree.k,
        functional: finite(value, "strategy-B functional")?,
    })
}

/// Per-`Ne` sums. Every sample lands in exactly one of `count[n]`,
/// `pruned` (`Ne > Ne_max`) or `aborted` (node cap hit or non-finite value).
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSeries {
    pub coeff_sum: Vec<f64>,
    pub sq_sum: Vec<f64>,
    pub count: Vec<u64>,
    pub pruned: u64,
    pub aborted: u64,
    pub n_total: u64,
}

impl BranchSeries {
    pub fn new(ne_max: usize) -> Self {
        Self {
            coeff_sum: vec![0.0; ne_max + 1],
            sq_sum: vec![0.0; ne_max + 1],
            count: vec![0; ne_max + 1],
            pruned: 0,
            aborted: 0,
            n_total: 0,
        }
    }

    pub fn ne_max(&self) -> usize {
        self.coeff_sum.len() - 1
    }

    pub fn push(&mut self, s: &SampleValue) {
        self.n_total += 1;
        if s.ne > self.ne_max() {
            self.pruned += 1;
        } else {
            self.coeff_sum[s.ne] += s.functional;
            self.sq_sum[s.ne] += s.functional * s.functional;
            self.count[s.ne] += 1;
        }
    }

    pub fn push_pruned(&mut self) {
        self.n_total += 1;
        self.pruned += 1;
    }

    pub fn push_aborted(&mut self) {
        self.n_total += 1;
        self.aborted += 1;
    }

    pub fn merge(&mut self, other: &BranchSeries) {
        assert_eq!(self.ne_max(), other.ne_max(), "merging series of different lengths");
        for n in 0..self.coeff_sum.len() {
            self.coeff_sum[n] += other.coeff_sum[n];
            self.sq_sum[n] += other.sq_sum[n];
            self.count[n] += other.count[n];
        }
        self.pruned += other.pruned;
        self.aborted += other.aborted;
        self.n_total += other.n_total;
    }

    /// `a_n = coeff_sum[n] / N_total`.
    pub fn coefficients(&self) -> Vec<f64> {
        let n = self.n_total.max(1) as f64;
        self.coeff_sum.iter().map(|s| s / n).collect()
    }

    /// Standard error of each `a_n` (the per-sample variable is `F·1{Ne=n}`).
    pub fn coefficient_stderr(&self) -> Vec<f64> {
        if self.n_total < 2 {
            return vec![0.0; self.coeff_sum.len()];
        }
        let n = self.n_total as f64;
        self.coeff_sum
            .iter()
            .zip(&self.sq_sum)
            .map(|(s, s2)| {
                let mean = s / n;
                ((s2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
            })
            .collect()
    }
}

/// Groups a sample stream into a series truncated at `ne_max`.
pub fn accumulate<I: IntoIterator<Item = SampleValue>>(samples: I, ne_max: usize) -> BranchSeries {
    let mut series = BranchSeries::new(ne_max);
    for s in samples {
        series.push(&s);
    }
    series
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub strategy: Strategy,
    pub n: u64,
    pub dt: f64,
    pub ne_max: usize,
    /// Explicit `[L/M]`; near-diagonal when `None`.
    pub pade_order: Option<(usize, usize)>,
    pub seed: u64,
    /// Stream key of this estimate within a larger run.
    pub task_id: u64,
    pub node_cap: usize,
    /// Paths leaving this box are killed (zero Dirichlet data).
    pub absorbing: Option<BoxDomain>,
    /// Grow every genealogy to completion. Off by default: a tree is
    /// classified as pruned as soon as it passes `ne_max` splits, which
    /// leaves the coefficients unchanged and only moves cap-hitting trees
    /// from `aborted` to `pruned`.
    pub full_topology: bool,
}

impl EstimatorConfig {
    pub fn new(strategy: Strategy, n: u64) -> Self {
        Self {
            strategy,
            n,
            dt: 0.01,
            ne_max: 3,
            pade_order: None,
            seed: 0,
            task_id: 0,
            node_cap: DEFAULT_NODE_CAP,
            absorbing: None,
            full_topology: false,
        }
    }

    pub fn validate(&self, p: &Problem) -> Result<()> {
        p.check()?;
        if self.n == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some((l, m)) = self.pade_order {
            if l + m > self.ne_max {
                return Err(Error::InvalidArgument(format!(
                    "Padé order [{l}/{m}] needs Ne_max >= {}",
                    l + m
                )));
            }
        }
        if let Strategy::B { q } = self.strategy {
            let range = p.admissible_q_range();
            if !range.contains(q) {
                return Err(Error::InadmissibleQ { q, q_min: range.min });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    /// Bootstrap spread of the Padé sum.
    pub stderr: f64,
    pub series: BranchSeries,
    pub pade: PadeDiagnostics,
    /// Set when the Padé denominator vanishes in `(0, 1]` or the sum had to
    /// fall back to the truncated series.
    pub pole_flag: bool,
}

impl PointEstimate {
    /// Plain truncated sum `Σ a_n` (no Padé).
    pub fn truncated_sum(&self) -> f64 {
        self.series.coefficients().iter().sum()
    }
}

fn sample_block(
    p: &Problem,
    sampler: &TreeSampler<'_>,
    x: Point,
    t: f64,
    ne_max: usize,
    count: u64,
    full_topology: bool,
    rng: &mut RngStream,
) -> BranchSeries {
    let mut series = BranchSeries::new(ne_max);
    let mut tree = RandomTree::empty(sampler.strategy());
    for _ in 0..count {
        let limit = (!full_topology).then_some(ne_max);
        match sampler.sample_topology_until(t, limit, rng, &mut tree) {
            Err(_) => {
                series.push_aborted();
                continue;
            }
            Ok(false) => {
                series.push_pruned();
                continue;
            }
            Ok(true) if tree.ne > ne_max => {
                series.push_pruned();
                continue;
            }
            Ok(true) => {}
        }
        sampler.simulate_paths(x, &mut tree, rng);
        let value = match sampler.strategy() {
            Strategy::A => evaluate_sample_a(p, &tree, t),
            Strategy::B { q } => evaluate_sample_b(p, &tree, t, q),
        };
        match value {
            Ok(s) => series.push(&s),
            Err(_) => series.push_aborted(),
        }
    }
    series
}

/// Raw branch series at `(x, t)`; blocks run on the ambient rayon pool and
/// are merged in block order.
pub fn sample_series(p: &Problem, x: Point, t: f64, cfg: &EstimatorConfig) -> Result<BranchSeries> {
    cfg.validate(p)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    let sim = PathSimulator::new(p, cfg.dt)?.with_absorbing(cfg.absorbing);
    let sampler = TreeSampler::new(sim, cfg.strategy)?.with_node_cap(cfg.node_cap);
    let base = RngStream::new(cfg.seed, cfg.task_id);
    let n_blocks = cfg.n.div_ceil(BLOCK_SIZE);
    let blocks: Vec<BranchSeries> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK_SIZE.min(cfg.n - b * BLOCK_SIZE);
            let mut rng = base.substream(b);
            sample_block(p, &sampler, x, t, cfg.ne_max, count, cfg.full_topology, &mut rng)
        })
        .collect();
    let mut series = BranchSeries::new(cfg.ne_max);
    for b in &blocks {
        series.merge(b);
    }
    Ok(series)
}

fn pade_value(c: &[f64], order: Option<(usize, usize)>) -> Option<(f64, PadeDiagnostics)> {
    sum_series_with_order(c, order).ok()
}

/// Sums a series by Padé and attaches a bootstrap error: the coefficients
/// are redrawn `20` times from their normal sampling laws, with draws keyed
/// by `(seed, task_id)` only, and the spread of the Padé sums is reported.
pub fn summarize(series: BranchSeries, cfg: &EstimatorConfig) -> PointEstimate {
    let coeffs = series.coefficients();
    let se = series.coefficient_stderr();
    let (value, pade, pole_flag) = match pade_value(&coeffs, cfg.pade_order) {
        Some((v, d)) => {
            let flag = d.has_pole();
            (v, d, flag)
        }
        None => (coeffs.iter().sum(), PadeDiagnostics::default(), true),
    };
    let mut rng = RngStream::new(cfg.seed ^ BOOTSTRAP_KEY, mix64(cfg.task_id));
    let mut draws = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let perturbed: Vec<f64> = coeffs.iter().zip(&se).map(|(a, s)| a + s * rng.normal()).collect();
        if let Some((v, _)) = pade_value(&perturbed, cfg.pade_order) {
            draws.push(v);
        }
    }
    let stderr = if draws.len() >= 2 {
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt()
    } else {
        se.iter().map(|s| s * s).sum::<f64>().sqrt()
    };
    PointEstimate {
        value,
        stderr,
        series,
        pade,
        pole_flag,
    }
}

/// Samples `cfg.n` trees rooted at `(x, t)`, accumulates the branch series
/// and Padé-sums it. `t = 0` returns `g(x)` without sampling.
pub fn estimate_point(p: &Problem, x: Point, t: f64, cfg: &EstimatorConfig) -> Result<PointEstimate> {
    if t == 0.0 {
        cfg.validate(p)?;
        let mut series = BranchSeries::new(cfg.ne_max);
        series.push(&SampleValue {
            ne: 0,
            k: 1,
            functional: p.initial_value(&x),
        });
        return Ok(PointEstimate {
            value: p.initial_value(&x),
            stderr: 0.0,
            series,
            pade: PadeDiagnostics::default(),
            pole_flag: false,
        });
    }
    let series = sample_series(p, x, t, cfg)?;
    Ok(summarize(series, cfg))
}
