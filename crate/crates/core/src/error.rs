use std::fmt;

/// Errors raised by the solver layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied parameter is outside its domain.
    InvalidArgument(String),
    /// The problem definition failed validation.
    InvalidProblem(Vec<String>),
    /// Strategy-B branching probability outside the admissible range.
    InadmissibleQ { q: f64, q_min: f64 },
    /// Mean leaf count is infinite at this q.
    Singular { m: u32, q: f64 },
    /// A sampled tree exceeded the node safety cap.
    TreeTooLarge { cap: usize },
    /// A linear system had an exactly zero pivot.
    SingularMatrix { pivot: usize },
    /// The Padé denominator system is singular or too ill-conditioned.
    DegeneratePade { l: usize, m: usize, condition: f64 },
    /// Rational function evaluated at (or numerically at) a pole.
    Pole { z: f64 },
    /// Spline query outside the node range.
    OutOfRange { value: f64, lo: f64, hi: f64 },
    /// A PDD task kept failing.
    TaskFailed { task_id: u64, attempts: u32 },
    /// Arithmetic produced a non-finite value.
    NonFinite(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidProblem(v) => write!(f, "invalid problem: {}", v.join("; ")),
            Error::InadmissibleQ { q, q_min } => {
                write!(f, "q = {q} outside admissible range [{q_min}, 1)")
            }
            Error::Singular { m, q } => {
                write!(f, "mean branch count is singular at m = {m}, q = {q}")
            }
            Error::TreeTooLarge { cap } => write!(f, "random tree exceeded {cap} nodes"),
            Error::SingularMatrix { pivot } => write!(f, "matrix is singular at pivot {pivot}"),
            Error::DegeneratePade { l, m, condition } => write!(
                f,
                "degenerate Padé table at [{l}/{m}] (condition estimate {condition:.3e})"
            ),
            Error::Pole { z } => write!(f, "rational function has a pole at z = {z}"),
            Error::OutOfRange { value, lo, hi } => {
                write!(f, "query {value} outside interpolation range [{lo}, {hi}]")
            }
            Error::TaskFailed { task_id, attempts } => {
                write!(f, "task {task_id} failed {attempts} consecutive attempts")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
