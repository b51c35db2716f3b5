//! Semilinear parabolic problems `u_t = Lu + Σ_j c_j(x,t) u^j`, `u(x,0) = g(x)`.
//!
//! `L = Σ_i a_i(x,t) ∂_i² + b_i(x,t) ∂_i` with diagonal, strictly positive
//! diffusion. Nonlinear powers start at 2; there is no linear term.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Spatial point. In one dimension the second coordinate is ignored.
pub type Point = [f64; 2];

/// Values on a rectilinear grid, interpolated multilinearly and clamped at the edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Table {
    /// `values` is row-major with the last axis varying fastest.
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::InvalidArgument("table needs 1 to 3 axes".into()));
        }
        for ax in &axes {
            if ax.len() < 2 || ax.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(
                    "table axes need at least two strictly increasing nodes".into(),
                ));
            }
        }
        let expected: usize = axes.iter().map(Vec::len).product();
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "table has {} values, axes imply {expected}",
                values.len()
            )));
        }
        Ok(Self { axes, values })
    }

    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn eval(&self, coords: &[f64]) -> f64 {
        let d = self.axes.len();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for (k, ax) in self.axes.iter().enumerate() {
            let x = coords.get(k).copied().unwrap_or(0.0);
            let n = ax.len();
            let (i, w) = if x <= ax[0] {
                (0, 0.0)
            } else if x >= ax[n - 1] {
                (n - 2, 1.0)
            } else {
                let i = ax.partition_point(|&a| a <= x) - 1;
                (i, (x - ax[i]) / (ax[i + 1] - ax[i]))
            };
            base[k] = i;
            frac[k] = w;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut offset = 0;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                weight *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                offset = offset * self.axes[k].len() + base[k] + bit;
            }
            if weight != 0.0 {
                acc += weight * self.values[offset];
            }
        }
        acc
    }
}

pub type CoefficientCallable = Arc<dyn Fn(&Point, f64) -> f64 + Send + Sync>;

/// A coefficient function `c(x, t)`.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `amplitude · exp(-((x_axis - center)/width)²) / (t + tau0)`.
    GaussianRational {
        amplitude: f64,
        axis: usize,
        center: f64,
        width: f64,
        tau0: f64,
    },
    /// Table over the spatial axes followed by time.
    Tabulated(Arc<Table>),
    Custom(CoefficientCallable),
}

/// Declarative tag of a coefficient's functional form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Constant,
    SeparableGaussianRational,
    Tabulated,
    Custom,
}

impl Coefficient {
    #[inline]
    pub fn eval(&self, x: &Point, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::GaussianRational {
                amplitude,
                axis,
                center,
                width,
                tau0,
            } => {
                let z = (x[*axis] - center) / width;
                amplitude * (-z * z).exp() / (t + tau0)
            }
            Coefficient::Tabulated(table) => {
                let mut coords = [0.0; 3];
                let space = table.n_axes() - 1;
                coords[..space].copy_from_slice(&x[..space]);
                coords[space] = t;
                table.eval(&coords[..=space])
            }
            Coefficient::Custom(f) => f(x, t),
        }
    }

    pub fn kind(&self) -> CoefficientKind {
        match self {
            Coefficient::Constant(_) => CoefficientKind::Constant,
            Coefficient::GaussianRational { .. } => CoefficientKind::SeparableGaussianRational,
            Coefficient::Tabulated(_) => CoefficientKind::Tabulated,
            Coefficient::Custom(_) => CoefficientKind::Custom,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            _ => None,
        }
    }

    /// Conservative: anything that is not provably time-independent counts as dependent.
    pub fn is_time_dependent(&self) -> bool {
        !matches!(self, Coefficient::Constant(_))
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::GaussianRational {
                amplitude,
                axis,
                center,
                width,
                tau0,
            } => write!(
                f,
                "GaussianRational {{ amplitude: {amplitude}, axis: {axis}, center: {center}, width: {width}, tau0: {tau0} }}"
            ),
            Coefficient::Tabulated(t) => write!(f, "Tabulated({} axes)", t.n_axes()),
            Coefficient::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

pub type InitialCallable = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Initial data `g(x)`.
#[derive(Clone)]
pub enum InitialData {
    Constant(f64),
    /// `amplitude · exp(-x²/(4 spread)) / sqrt(4π spread)` in the first coordinate.
    HeatKernel { amplitude: f64, spread: f64 },
    /// `1 / (1 + exp(-x/scale))` in the first coordinate.
    Logistic { scale: f64 },
    /// `amplitude · Π_i cos²(π x_i / (2 A_i))` on `|x_i| ≤ A_i`, zero outside.
    CosineBump { amplitude: f64, half_widths: [f64; 2] },
    Tabulated(Arc<Table>),
    Custom(InitialCallable),
}

impl InitialData {
    #[inline]
    pub fn eval(&self, x: &Point, dim: usize) -> f64 {
        match self {
            InitialData::Constant(c) => *c,
            InitialData::HeatKernel { amplitude, spread } => {
                amplitude * (-x[0] * x[0] / (4.0 * spread)).exp() / (4.0 * PI * spread).sqrt()
            }
            InitialData::Logistic { scale } => 1.0 / (1.0 + (-x[0] / scale).exp()),
            InitialData::CosineBump {
                amplitude,
                half_widths,
            } => {
                let mut v = *amplitude;
                for (xi, a) in x.iter().zip(half_widths).take(dim) {
                    if xi.abs() > *a {
                        return 0.0;
                    }
                    let c = (PI * xi / (2.0 * a)).cos();
                    v *= c * c;
                }
                v
            }
            InitialData::Tabulated(table) => table.eval(&x[..table.n_axes()]),
            InitialData::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Constant(c) => write!(f, "Constant({c})"),
            InitialData::HeatKernel { amplitude, spread } => {
                write!(f, "HeatKernel {{ amplitude: {amplitude}, spread: {spread} }}")
            }
            InitialData::Logistic { scale } => write!(f, "Logistic {{ scale: {scale} }}"),
            InitialData::CosineBump {
                amplitude,
                half_widths,
            } => write!(
                f,
                "CosineBump {{ amplitude: {amplitude}, half_widths: {half_widths:?} }}"
            ),
            InitialData::Tabulated(t) => write!(f, "Tabulated({} axes)", t.n_axes()),
            InitialData::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// One nonlinear term `c_j(x,t) u^j`.
#[derive(Debug, Clone)]
pub struct NonlinearTerm {
    pub power: u32,
    pub coefficient: Coefficient,
}

/// The PDE. Immutable once built; cheap to clone and share between threads.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dim: usize,
    pub diffusion: Vec<Coefficient>,
    pub drift: Vec<Coefficient>,
    pub terms: Vec<NonlinearTerm>,
    pub initial: InitialData,
}

/// Shape of the set of nonlinear powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    /// One term `u^j`.
    Single(u32),
    /// Every power `2..=m` present.
    Full(u32),
    /// Some but not all of `2..=m`, more than one term.
    Sparse(u32),
}

/// Half-open interval `[min, 1)` of admissible strategy-B leaf probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QRange {
    pub min: f64,
}

impl QRange {
    pub fn contains(&self, q: f64) -> bool {
        q >= self.min - 1e-12 && q < 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BadDimension(usize),
    CoefficientCount { what: &'static str, got: usize },
    NoTerms,
    PowerBelowTwo(u32),
    PowersNotIncreasing,
    NonPositiveDiffusion { axis: usize, x: Point, t: f64, value: f64 },
    NonFiniteCoefficient(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadDimension(d) => write!(f, "dimension {d} not in {{1, 2}}"),
            Violation::CoefficientCount { what, got } => {
                write!(f, "{what} has {got} entries, expected one per axis")
            }
            Violation::NoTerms => write!(f, "no nonlinear terms (m < 2)"),
            Violation::PowerBelowTwo(p) => write!(f, "power below 2 (got {p})"),
            Violation::PowersNotIncreasing => write!(f, "powers not strictly increasing"),
            Violation::NonPositiveDiffusion { axis, x, t, value } => write!(
                f,
                "non-positive diffusion on axis {axis}: a({:?}, {t}) = {value}",
                x
            ),
            Violation::NonFiniteCoefficient(what) => write!(f, "non-finite {what}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Informational flags that do not make the problem invalid.
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

impl Problem {
    /// Unit diffusion, zero drift, no terms yet.
    pub fn new(dim: usize, initial: InitialData) -> Self {
        Self {
            dim,
            diffusion: vec![Coefficient::Constant(1.0); dim],
            drift: vec![Coefficient::Constant(0.0); dim],
            terms: Vec::new(),
            initial,
        }
    }

    pub fn with_term(mut self, power: u32, coefficient: Coefficient) -> Self {
        self.terms.push(NonlinearTerm { power, coefficient });
        self
    }

    pub fn with_diffusion(mut self, axis: usize, a: Coefficient) -> Self {
        self.diffusion[axis] = a;
        self
    }

    pub fn with_drift(mut self, axis: usize, b: Coefficient) -> Self {
        self.drift[axis] = b;
        self
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if !(1..=2).contains(&self.dim) {
            report.violations.push(Violation::BadDimension(self.dim));
            return report;
        }
        if self.diffusion.len() != self.dim {
            report.violations.push(Violation::CoefficientCount {
                what: "diffusion",
                got: self.diffusion.len(),
            });
        }
        if self.drift.len() != self.dim {
            report.violations.push(Violation::CoefficientCount {
                what: "drift",
                got: self.drift.len(),
            });
        }
        if self.terms.is_empty() {
            report.violations.push(Violation::NoTerms);
        }
        for term in &self.terms {
            if term.power < 2 {
                report.violations.push(Violation::PowerBelowTwo(term.power));
            }
        }
        if self.terms.windows(2).any(|w| w[1].power <= w[0].power) {
            report.violations.push(Violation::PowersNotIncreasing);
        }

        let probes = [-10.0, -2.5, 0.0, 2.5, 10.0];
        let times = [0.0, 0.5, 1.0];
        'axes: for (axis, a) in self.diffusion.iter().enumerate() {
            for &px in &probes {
                for &py in &probes {
                    for &t in &times {
                        let x = [px, py];
                        let v = a.eval(&x, t);
                        if !v.is_finite() {
                            report
                                .violations
                                .push(Violation::NonFiniteCoefficient("diffusion"));
                            continue 'axes;
                        }
                        if v <= 0.0 {
                            report.violations.push(Violation::NonPositiveDiffusion {
                                axis,
                                x,
                                t,
                                value: v,
                            });
                            continue 'axes;
                        }
                    }
                    if self.dim == 1 {
                        break;
                    }
                }
            }
        }
        if report.is_ok() && matches!(self.ladder(), Ladder::Sparse(_)) {
            report.notes.push(
                "sparse power ladder: q range uses the conservative single-term bound".into(),
            );
        }
        report
    }

    /// Returns `Err` listing all violations when the problem is malformed.
    pub fn check(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidProblem(report.messages()))
        }
    }

    pub fn max_power(&self) -> u32 {
        self.terms.iter().map(|t| t.power).max().unwrap_or(0)
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn ladder(&self) -> Ladder {
        let m = self.max_power();
        if self.terms.len() == 1 {
            Ladder::Single(m)
        } else if self.terms.len() as u32 == m.saturating_sub(1) {
            Ladder::Full(m)
        } else {
            Ladder::Sparse(m)
        }
    }

    /// `f(u, x, t) = Σ_j c_j(x,t) u^j`.
    pub fn eval_nonlinearity(&self, u: f64, x: &Point, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| term.coefficient.eval(x, t) * u.powi(term.power as i32))
            .sum()
    }

    /// Partial derivative `∂f/∂u`.
    pub fn eval_nonlinearity_du(&self, u: f64, x: &Point, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| {
                let j = term.power as i32;
                term.coefficient.eval(x, t) * j as f64 * u.powi(j - 1)
            })
            .sum()
    }

    #[inline]
    pub fn initial_value(&self, x: &Point) -> f64 {
        self.initial.eval(x, self.dim)
    }

    /// Admissible strategy-B leaf probabilities.
    pub fn admissible_q_range(&self) -> QRange {
        let min = match self.ladder() {
            Ladder::Single(m) => (m as f64 - 1.0) / m as f64,
            Ladder::Full(m) => m as f64 / (m as f64 + 2.0),
            Ladder::Sparse(m) => {
                let m = m as f64;
                ((m - 1.0) / m).max(m / (m + 2.0))
            }
        };
        QRange { min }
    }

    /// Leaf probability minimising the statistical error of high-order coefficients.
    pub fn optimal_q(&self) -> f64 {
        self.admissible_q_range().min
    }

    /// True when every coefficient of `L` is a constant.
    pub fn has_constant_operator(&self) -> bool {
        self.diffusion
            .iter()
            .chain(&self.drift)
            .all(|c| c.as_constant().is_some())
    }

    pub fn operator_is_time_dependent(&self) -> bool {
        self.diffusion
            .iter()
            .chain(&self.drift)
            .any(Coefficient::is_time_dependent)
    }
}

/// The five worked examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinProblem {
    /// `u_t = u_xx - u²`, heat-kernel initial data.
    Ex1,
    /// `u_t = u_xx + u²`, negative heat-kernel initial data of amplitude 6.
    Ex2,
    /// `u_t = u_xx - (1+a)u² - u³`, logistic initial data.
    Ex3 { a: f64 },
    /// 2D, `u_t = Δu - (1+a)u² - u³`, cosine-bump initial data.
    Ex4 { a: f64, ax: f64, ay: f64 },
    /// 2D, `u_t = Δu - e^{-x²}/(t+0.1) u²`.
    Ex5,
}

impl BuiltinProblem {
    pub fn ex3() -> Self {
        BuiltinProblem::Ex3 { a: 0.25 }
    }

    pub fn ex4() -> Self {
        BuiltinProblem::Ex4 {
            a: 0.25,
            ax: 10.0,
            ay: 40.0,
        }
    }

    /// Parses `ex1`..`ex5`; `params` override `a`, `ax`, `ay` where they apply.
    pub fn from_id(id: &str, params: &[(String, f64)]) -> Result<Self> {
        let lookup = |name: &str, default: f64| {
            params
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| *v)
                .unwrap_or(default)
        };
        let known: &[&str] = match id {
            "ex1" | "ex2" | "ex5" => &[],
            "ex3" => &["a"],
            "ex4" => &["a", "ax", "ay"],
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown builtin problem '{other}'"
                )))
            }
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!(
                "parameter '{k}' does not apply to {id}"
            )));
        }
        Ok(match id {
            "ex1" => BuiltinProblem::Ex1,
            "ex2" => BuiltinProblem::Ex2,
            "ex3" => BuiltinProblem::Ex3 {
                a: lookup("a", 0.25),
            },
            "ex4" => BuiltinProblem::Ex4 {
                a: lookup("a", 0.25),
                ax: lookup("ax", 10.0),
                ay: lookup("ay", 40.0),
            },
            _ => BuiltinProblem::Ex5,
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            BuiltinProblem::Ex1 => "ex1",
            BuiltinProblem::Ex2 => "ex2",
            BuiltinProblem::Ex3 { .. } => "ex3",
            BuiltinProblem::Ex4 { .. } => "ex4",
            BuiltinProblem::Ex5 => "ex5",
        }
    }

    pub fn problem(&self) -> Problem {
        let heat = |amplitude| InitialData::HeatKernel {
            amplitude,
            spread: 1.0,
        };
        match *self {
            BuiltinProblem::Ex1 => Problem::new(1, heat(1.0)).with_term(2, Coefficient::Constant(-1.0)),
            BuiltinProblem::Ex2 => Problem::new(1, heat(-6.0)).with_term(2, Coefficient::Constant(1.0)),
            BuiltinProblem::Ex3 { a } => Problem::new(
                1,
                InitialData::Logistic {
                    scale: std::f64::consts::SQRT_2,
                },
            )
            .with_term(2, Coefficient::Constant(-(1.0 + a)))
            .with_term(3, Coefficient::Constant(-1.0)),
            BuiltinProblem::Ex4 { a, ax, ay } => Problem::new(
                2,
                InitialData::CosineBump {
                    amplitude: -2.0,
                    half_widths: [ax, ay],
                },
            )
            .with_term(2, Coefficient::Constant(-(1.0 + a)))
            .with_term(3, Coefficient::Constant(-1.0)),
            BuiltinProblem::Ex5 => Problem::new(2, heat(1.0)).with_term(
                2,
                Coefficient::GaussianRational {
                    amplitude: -1.0,
                    axis: 0,
                    center: 0.0,
                    width: 1.0,
                    tau0: 0.1,
                },
            ),
        }
    }
}
