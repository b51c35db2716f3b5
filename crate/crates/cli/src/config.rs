//! Run configuration: a TOML file, overridden by command-line flags, resolved
//! into a fully specified [`RunConfig`] before anything is computed.
//!
//! ```toml
//! seed = 7
//!
//! [problem]
//! id = "ex3"
//! a = 0.25
//!
//! [mc]
//! strategy = "B"
//! n = 1000000
//! ne_max = 3
//! pade = "2/1"
//!
//! [grid]
//! lo = [-20.0]
//! hi = [20.0]
//! dx = 0.05
//! dt = 0.001
//! t = 0.5
//! boundary = "zero"
//!
//! [pdd]
//! subdomains = 4
//! fault_rate = 0.0
//! ```
//!
//! Instead of `id`, a problem can list its terms explicitly:
//!
//! ```toml
//! [problem]
//! dim = 1
//! diffusion = [1.0]
//! terms = [[2, -1.0], [3, -1.0]]
//! initial = { kind = "logistic", scale = 1.0 }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use treepde::estimator::EstimatorConfig;
use treepde::fdm::{BoundaryPolicy, Grid};
use treepde::pdd::{McSettings, NodalConfig, DEFAULT_MAX_ATTEMPTS};
use treepde::problem::{BuiltinProblem, Coefficient, InitialData, Problem};
use treepde::trees::Strategy;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub point: PointSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub pdd: PddSection,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub id: Option<String>,
    pub a: Option<f64>,
    pub ax: Option<f64>,
    pub ay: Option<f64>,
    pub dim: Option<usize>,
    pub diffusion: Option<Vec<f64>>,
    pub drift: Option<Vec<f64>>,
    pub terms: Option<Vec<(u32, f64)>>,
    pub initial: Option<InitialSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: String,
    pub value: Option<f64>,
    pub amplitude: Option<f64>,
    pub spread: Option<f64>,
    pub scale: Option<f64>,
    pub half_widths: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSection {
    pub x: Option<Vec<f64>>,
    pub y: Option<f64>,
    pub t: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub strategy: Option<String>,
    pub n: Option<u64>,
    pub dt: Option<f64>,
    pub q: Option<f64>,
    pub ne_max: Option<usize>,
    pub pade: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub t: Option<f64>,
    pub boundary: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PddSection {
    pub subdomains: Option<usize>,
    pub workers: Option<usize>,
    pub fault_rate: Option<f64>,
    pub max_attempts: Option<u32>,
    pub nodes_space: Option<usize>,
    pub nodes_time: Option<usize>,
}

/// Values given on the command line; `None` defers to the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub problem: Option<String>,
    pub params: Vec<(String, f64)>,
    pub x: Option<Vec<f64>>,
    pub y: Option<f64>,
    pub t: Option<Vec<f64>>,
    pub strategy: Option<String>,
    pub n: Option<u64>,
    pub dt: Option<f64>,
    pub q: Option<f64>,
    pub ne_max: Option<usize>,
    pub pade: Option<String>,
    pub subdomains: Option<usize>,
    pub workers: Option<usize>,
    pub fault_rate: Option<f64>,
    pub seed: Option<u64>,
    pub boundary: Option<String>,
    pub desk_scale: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub dx: f64,
    pub dt: f64,
    pub t: f64,
    pub boundary: String,
}

/// Fully resolved settings. Everything that can change a result is part of
/// the hash; the worker count is not, since results do not depend on it.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub problem: ProblemSection,
    pub x: Vec<f64>,
    pub y: f64,
    pub t: Vec<f64>,
    pub strategy: String,
    pub n: u64,
    pub dt: f64,
    pub q: f64,
    pub ne_max: usize,
    pub pade: Option<(usize, usize)>,
    pub grid: GridSpec,
    pub subdomains: usize,
    pub fault_rate: f64,
    pub max_attempts: u32,
    pub nodes_space: usize,
    pub nodes_time: usize,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn parse_pade(s: &str) -> Result<(usize, usize), CliError> {
    let (l, m) = s
        .split_once('/')
        .ok_or_else(|| config_err(format!("Padé order must look like L/M, got '{s}'")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| config_err(format!("bad Padé order '{s}'")))
    };
    Ok((parse(l)?, parse(m)?))
}

pub fn default_workers() -> usize {
    std::env::var("TREEPDE_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn to_point(v: &[f64], what: &str, dim: usize) -> Result<[f64; 2], CliError> {
    if v.len() != dim {
        return Err(config_err(format!("grid.{what} needs {dim} entries, got {}", v.len())));
    }
    Ok([v[0], v.get(1).copied().unwrap_or(0.0)])
}

impl ProblemSection {
    pub fn build(&self) -> Result<Problem, CliError> {
        if let Some(id) = &self.id {
            if self.terms.is_some() || self.initial.is_some() || self.dim.is_some() {
                return Err(config_err("problem: give either an id or explicit terms, not both"));
            }
            let params: Vec<(String, f64)> = [("a", self.a), ("ax", self.ax), ("ay", self.ay)]
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
                .collect();
            return Ok(BuiltinProblem::from_id(id, &params)?.problem());
        }
        let terms = self
            .terms
            .as_ref()
            .ok_or_else(|| config_err("problem: missing id or terms"))?;
        let dim = self.dim.unwrap_or(1);
        let initial = self
            .initial
            .as_ref()
            .ok_or_else(|| config_err("problem: explicit terms need an initial section"))?
            .build()?;
        let mut p = Problem::new(dim, initial);
        for (name, values) in [("diffusion", &self.diffusion), ("drift", &self.drift)] {
            if let Some(v) = values {
                if v.len() != dim {
                    return Err(config_err(format!("problem.{name} needs {dim} entries")));
                }
                for (axis, &c) in v.iter().enumerate() {
                    p = if name == "diffusion" {
                        p.with_diffusion(axis, Coefficient::Constant(c))
                    } else {
                        p.with_drift(axis, Coefficient::Constant(c))
                    };
                }
            }
        }
        for &(power, c) in terms {
            p = p.with_term(power, Coefficient::Constant(c));
        }
        p.check()?;
        Ok(p)
    }

    pub fn dim(&self) -> Result<usize, CliError> {
        Ok(self.build()?.dim)
    }
}

impl InitialSection {
    fn build(&self) -> Result<InitialData, CliError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| config_err(format!("initial data '{}' needs {name}", self.kind)))
        };
        Ok(match self.kind.as_str() {
            "constant" => InitialData::Constant(need(self.value, "value")?),
            "heat_kernel" => InitialData::HeatKernel {
                amplitude: need(self.amplitude, "amplitude")?,
                spread: need(self.spread, "spread")?,
            },
            "logistic" => InitialData::Logistic {
                scale: need(self.scale, "scale")?,
            },
            "cosine_bump" => InitialData::CosineBump {
                amplitude: need(self.amplitude, "amplitude")?,
                half_widths: self
                    .half_widths
                    .ok_or_else(|| config_err("initial data 'cosine_bump' needs half_widths"))?,
            },
            other => return Err(config_err(format!("unknown initial data kind '{other}'"))),
        })
    }
}

fn desk_grid(dim: usize) -> GridSpec {
    if dim == 1 {
        GridSpec {
            lo: [-20.0, 0.0],
            hi: [20.0, 0.0],
            dx: 0.05,
            dt: 1e-3,
            t: 0.5,
            boundary: "zero".into(),
        }
    } else {
        GridSpec {
            lo: [-10.0, -10.0],
            hi: [10.0, 10.0],
            dx: 0.25,
            dt: 1e-3,
            t: 0.5,
            boundary: "zero".into(),
        }
    }
}

pub fn resolve(command: &str, file: Option<FileConfig>, o: &Overrides) -> Result<RunConfig, CliError> {
    let file = file.unwrap_or_default();
    let mut problem = file.problem.clone();
    if let Some(id) = &o.problem {
        problem = ProblemSection {
            id: Some(id.clone()),
            ..Default::default()
        };
    }
    for (k, v) in &o.params {
        match k.as_str() {
            "a" => problem.a = Some(*v),
            "ax" => problem.ax = Some(*v),
            "ay" => problem.ay = Some(*v),
            other => return Err(config_err(format!("unknown problem parameter '{other}'"))),
        }
    }
    if problem.id.is_none() && problem.terms.is_none() {
        return Err(config_err("no problem given (use --problem or a [problem] section)"));
    }
    let p = problem.build()?;
    let dim = p.dim;

    let strategy = o
        .strategy
        .clone()
        .or(file.mc.strategy.clone())
        .unwrap_or_else(|| "B".into())
        .to_uppercase();
    if strategy != "A" && strategy != "B" {
        return Err(config_err(format!("strategy must be A or B, got '{strategy}'")));
    }
    let pdd_like = command == "solve-pdd" || command == "compare";
    let n = o.n.or(file.mc.n).unwrap_or(if o.desk_scale { 100_000 } else { 1_000_000 });
    let ne_max = o
        .ne_max
        .or(file.mc.ne_max)
        .unwrap_or(if pdd_like && o.desk_scale { 2 } else { 3 });
    let pade = match o.pade.as_ref().or(file.mc.pade.as_ref()) {
        Some(s) => Some(parse_pade(s)?),
        None => None,
    };
    let q = o.q.or(file.mc.q).unwrap_or_else(|| p.optimal_q());

    let mut grid = desk_grid(dim);
    let g = &file.grid;
    if let Some(lo) = &g.lo {
        grid.lo = to_point(lo, "lo", dim)?;
    }
    if let Some(hi) = &g.hi {
        grid.hi = to_point(hi, "hi", dim)?;
    }
    grid.dx = g.dx.unwrap_or(grid.dx);
    grid.dt = g.dt.unwrap_or(grid.dt);
    grid.t = g.t.unwrap_or(grid.t);
    if let Some(b) = o.boundary.clone().or(g.boundary.clone()) {
        grid.boundary = b;
    }
    if !["zero", "far-field"].contains(&grid.boundary.as_str()) {
        return Err(config_err(format!(
            "boundary must be 'zero' or 'far-field', got '{}'",
            grid.boundary
        )));
    }

    let t = o.t.clone().or(file.point.t.clone()).unwrap_or_else(|| vec![grid.t]);
    if t.is_empty() || t.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(config_err("times must be finite and non-negative"));
    }
    if command != "solve-point" {
        if t.len() != 1 {
            return Err(config_err(format!("{command} takes a single final time")));
        }
        grid.t = t[0];
    }

    let cfg = RunConfig {
        command: command.to_string(),
        problem,
        x: o.x.clone().or(file.point.x.clone()).unwrap_or_else(|| vec![0.0]),
        y: o.y.or(file.point.y).unwrap_or(0.0),
        t,
        strategy,
        n,
        dt: o.dt.or(file.mc.dt).unwrap_or(0.01),
        q,
        ne_max,
        pade,
        grid,
        subdomains: o.subdomains.or(file.pdd.subdomains).unwrap_or(4),
        fault_rate: o.fault_rate.or(file.pdd.fault_rate).unwrap_or(0.0),
        max_attempts: file.pdd.max_attempts.unwrap_or(DEFAULT_MAX_ATTEMPTS),
        nodes_space: file.pdd.nodes_space.unwrap_or(NodalConfig::default().n_space),
        nodes_time: file.pdd.nodes_time.unwrap_or(NodalConfig::default().n_time),
        seed: o.seed.or(file.seed).unwrap_or(0),
        workers: o.workers.or(file.pdd.workers).unwrap_or_else(default_workers),
    };
    cfg.validate(&p)?;
    Ok(cfg)
}

impl RunConfig {
    pub fn problem(&self) -> Result<Problem, CliError> {
        self.problem.build()
    }

    pub fn strategy(&self) -> Strategy {
        if self.strategy == "A" {
            Strategy::A
        } else {
            Strategy::B { q: self.q }
        }
    }

    pub fn estimator(&self) -> EstimatorConfig {
        let mut e = EstimatorConfig::new(self.strategy(), self.n);
        e.dt = self.dt;
        e.ne_max = self.ne_max;
        e.pade_order = self.pade;
        e.seed = self.seed;
        e
    }

    pub fn mc_settings(&self) -> McSettings {
        let mut mc = McSettings::new(self.estimator());
        mc.workers = self.workers;
        mc.fault_rate = self.fault_rate;
        mc.max_attempts = self.max_attempts;
        mc
    }

    pub fn nodal(&self) -> NodalConfig {
        NodalConfig {
            n_space: self.nodes_space,
            n_time: self.nodes_time,
        }
    }

    pub fn grid(&self, dim: usize) -> Result<Grid, CliError> {
        let g = &self.grid;
        Ok(Grid::new(dim, g.lo, g.hi, g.dx, g.dt, g.t)?)
    }

    pub fn boundary(&self) -> BoundaryPolicy {
        if self.grid.boundary == "far-field" {
            BoundaryPolicy::FarField
        } else {
            BoundaryPolicy::ZeroDirichlet
        }
    }

    /// Validates every value the command could touch.
    fn validate(&self, p: &Problem) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(config_err("workers must be positive"));
        }
        if !(0.0..1.0).contains(&self.fault_rate) {
            return Err(config_err(format!("fault rate must lie in [0, 1), got {}", self.fault_rate)));
        }
        if self.max_attempts == 0 {
            return Err(config_err("max_attempts must be positive"));
        }
        match self.command.as_str() {
            "solve-point" => {
                self.estimator().validate(p)?;
                if p.dim == 1 && self.y != 0.0 {
                    return Err(config_err("--y given for a 1D problem"));
                }
            }
            "solve-reference" => {
                self.grid(p.dim)?;
            }
            _ => {
                self.estimator().validate(p)?;
                let grid = self.grid(p.dim)?;
                treepde::pdd::plan_decomposition(p, &grid, self.subdomains, self.nodal(), self.seed)?;
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn overrides(problem: &str) -> Overrides {
        Overrides {
            problem: Some(problem.into()),
            workers: Some(1),
            ..Default::default()
        }
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str(
            "seed = 3\n[problem]\nid = \"ex1\"\n[mc]\nstrategy = \"A\"\nn = 500\n",
        )
        .unwrap();
        let mut o = Overrides {
            n: Some(900),
            workers: Some(1),
            ..Default::default()
        };
        let cfg = resolve("solve-point", Some(file.clone()), &o).unwrap();
        assert_eq!((cfg.n, cfg.seed, cfg.strategy.as_str()), (900, 3, "A"));
        o.seed = Some(4);
        assert_ne!(resolve("solve-point", Some(file), &o).unwrap().hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_workers() {
        let mut o = overrides("ex1");
        let a = resolve("solve-point", None, &o).unwrap();
        o.workers = Some(3);
        let b = resolve("solve-point", None, &o).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[mc]\nnn = 3\n").is_err());
    }

    #[test]
    fn bad_values_fail_before_compute() {
        let mut o = overrides("ex1");
        o.q = Some(0.2);
        assert!(matches!(resolve("solve-point", None, &o), Err(CliError::Config(_))));
        let mut o = overrides("ex4");
        o.subdomains = Some(100);
        assert!(resolve("solve-pdd", None, &o).is_err());
        assert!(resolve("solve-point", None, &overrides("ex9")).is_err());
    }

    #[test]
    fn explicit_terms() {
        let file: FileConfig = toml::from_str(
            "[problem]\nterms = [[2, -1.0], [3, -1.0]]\ninitial = { kind = \"logistic\", scale = 1.0 }\n",
        )
        .unwrap();
        let o = Overrides {
            workers: Some(1),
            ..Default::default()
        };
        let cfg = resolve("solve-point", Some(file), &o).unwrap();
        let p = cfg.problem().unwrap();
        assert_eq!(p.terms.len(), 2);
        assert_eq!(cfg.q, p.optimal_q());
    }
}
