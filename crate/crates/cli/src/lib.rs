//! Command-line front end for the `treepde` solvers.
//!
//! Exit codes: 0 on success, 2 for configuration errors (bad flags, bad
//! config file, inadmissible parameters, unwritable outputs), 3 for
//! numerical failures (poles, singular systems, tasks out of attempts).

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<treepde::Error> for CliError {
    fn from(e: treepde::Error) -> Self {
        use treepde::Error as E;
        match e {
            E::InvalidArgument(_)
            | E::InvalidProblem(_)
            | E::InadmissibleQ { .. }
            | E::Singular { .. }
            | E::Io(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "treepde", version, about = "Random-tree Monte Carlo and domain decomposition for semilinear parabolic PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo estimate of u(x, t) at single points.
    SolvePoint(RunArgs),
    /// Probabilistic domain decomposition on the configured grid.
    SolvePdd(RunArgs),
    /// Single-domain Crank–Nicolson solution.
    SolveReference(RunArgs),
    /// Runs solve-pdd and solve-reference and compares them point by point.
    Compare(RunArgs),
    /// Empirical against analytic law of strategy-B trees with one power.
    TreeStats(TreeArgs),
    /// Padé sum at z = 1 of a coefficient list.
    PadeSum(PadeArgs),
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// TOML run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Builtin problem id (ex1..ex5).
    #[arg(long)]
    pub problem: Option<String>,
    /// Problem parameter override, e.g. `a=0.5`.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub y: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
    /// A or B.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub n: Option<u64>,
    /// Euler time step of the diffusion paths.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub ne_max: Option<usize>,
    /// Padé order `L/M`.
    #[arg(long)]
    pub pade: Option<String>,
    #[arg(long)]
    pub subdomains: Option<usize>,
    /// Worker threads (default: TREEPDE_THREADS, else all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub fault_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `zero` or `far-field`.
    #[arg(long)]
    pub boundary: Option<String>,
    /// Output file (or directory for solve-pdd).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Desk-scale grid and sample sizes.
    #[arg(long)]
    pub desk_scale: bool,
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    /// Power of the single nonlinear term.
    #[arg(long, default_value_t = 2)]
    pub m: u32,
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: u64,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Largest Ne reported.
    #[arg(long, default_value_t = 12)]
    pub max_ne: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PadeArgs {
    /// CSV file; the last column of every numeric row is a coefficient.
    #[arg(long, conflicts_with = "coeffs")]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub coeffs: Option<Vec<f64>>,
    #[arg(long)]
    pub pade: Option<String>,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v = v.parse::<f64>().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.to_string(), v))
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            problem: self.problem.clone(),
            params: self.params.clone(),
            x: self.x.clone(),
            y: self.y,
            t: self.t.clone(),
            strategy: self.strategy.clone(),
            n: self.n,
            dt: self.dt,
            q: self.q,
            ne_max: self.ne_max,
            pade: self.pade.clone(),
            subdomains: self.subdomains,
            workers: self.workers,
            fault_rate: self.fault_rate,
            seed: self.seed,
            boundary: self.boundary.clone(),
            desk_scale: self.desk_scale,
        }
    }
}

fn resolve(command: &str, args: &RunArgs) -> Result<config::RunConfig, CliError> {
    let file = args.config.as_deref().map(config::load_file).transpose()?;
    config::resolve(command, file, &args.overrides())
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::SolvePoint(a) => commands::solve_point(&resolve("solve-point", &a)?, a.out.as_deref()),
        Command::SolvePdd(a) => commands::solve_pdd(&resolve("solve-pdd", &a)?, a.out.as_deref()),
        Command::SolveReference(a) => {
            commands::solve_reference(&resolve("solve-reference", &a)?, a.out.as_deref())
        }
        Command::Compare(a) => commands::compare(&resolve("compare", &a)?, a.out.as_deref()),
        Command::TreeStats(a) => commands::tree_stats(&a),
        Command::PadeSum(a) => commands::pade_sum(&a),
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("treepde: {e}");
            e.exit_code()
        }
    }
}
