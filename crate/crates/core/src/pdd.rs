//! Probabilistic domain decomposition.
//!
//! The domain is cut by planes `x = const`. The solution is estimated by
//! Monte Carlo at a few nodal points `(y_j, t_k)` on every plane, splines
//! turn those into Dirichlet data, and the subdomains are then solved
//! independently with Crank–Nicolson.
//!
//! Every nodal point is one task with its own random stream. Tasks may be
//! killed by injected faults and are re-queued until they succeed or run out
//! of attempts; since a task is a pure function of its seed, the result never
//! depends on faults, retries or the number of workers.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{estimate_point, EstimatorConfig};
use crate::fdm::{solve_observed, BoundaryPolicy, DirichletData, Field, Grid};
use crate::interp::{Spline1D, TensorSpline2D};
use crate::problem::{Point, Problem};
use crate::rng::{mix64, RngStream};
use crate::sde::BoxDomain;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 5;
const FAULT_KEY: u64 = 0xfa17_fa17_0dd5_0dd5;

/// Nodal points per interface: uniform, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodalConfig {
    /// Points along the interface (2D only).
    pub n_space: usize,
    pub n_time: usize,
}

impl Default for NodalConfig {
    fn default() -> Self {
        Self {
            n_space: 9,
            n_time: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// `t = 0`: the value is `g`.
    Initial,
    /// Interface end on the global boundary: the global Dirichlet value.
    GlobalBoundary,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PddTask {
    pub task_id: u64,
    pub interface: usize,
    pub i_space: usize,
    pub i_time: usize,
    pub point: Point,
    pub t: f64,
    pub kind: TaskKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PddPlan {
    pub grid: Grid,
    /// Interface abscissae, snapped to grid columns.
    pub interfaces: Vec<f64>,
    pub interface_columns: Vec<usize>,
    /// Nodal coordinates along each interface (`[0]` in 1D).
    pub space_nodes: Vec<f64>,
    pub time_nodes: Vec<f64>,
    /// Column ranges `(i0, i1)` of the subdomains, sharing interface columns.
    pub subdomain_columns: Vec<(usize, usize)>,
    pub tasks: Vec<PddTask>,
    pub seed: u64,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn plan_decomposition(
    p: &Problem,
    grid: &Grid,
    n_sub: usize,
    nodal: NodalConfig,
    seed: u64,
) -> Result<PddPlan> {
    if n_sub == 0 {
        return Err(Error::InvalidArgument("need at least one subdomain".into()));
    }
    if p.dim != grid.dim {
        return Err(Error::InvalidArgument(format!(
            "problem is {}D, grid is {}D",
            p.dim, grid.dim
        )));
    }
    if n_sub > 1 && (nodal.n_time < 4 || (grid.dim == 2 && nodal.n_space < 4)) {
        return Err(Error::InvalidArgument(
            "not-a-knot splines need at least 4 nodal points per direction".into(),
        ));
    }
    let cells = grid.nx - 1;
    if n_sub > cells / 2 {
        return Err(Error::InvalidArgument(format!(
            "{n_sub} subdomains do not fit in {} grid columns",
            grid.nx
        )));
    }
    let mut columns = vec![0usize];
    for k in 1..n_sub {
        let target = k as f64 * cells as f64 / n_sub as f64;
        columns.push(target.round() as usize);
    }
    columns.push(cells);
    if columns.windows(2).any(|w| w[1] < w[0] + 2) {
        return Err(Error::InvalidArgument(format!(
            "{n_sub} subdomains leave a subdomain without interior columns"
        )));
    }
    let interface_columns: Vec<usize> = columns[1..columns.len() - 1].to_vec();
    let interfaces: Vec<f64> = interface_columns.iter().map(|&i| grid.x(i)).collect();
    let subdomain_columns: Vec<(usize, usize)> = columns.windows(2).map(|w| (w[0], w[1])).collect();

    let space_nodes = if grid.dim == 2 {
        linspace(grid.lo[1], grid.hi[1], nodal.n_space)
    } else {
        vec![0.0]
    };
    let time_nodes = linspace(0.0, grid.t_final, nodal.n_time.max(1));
    let mut tasks = Vec::new();
    for (k, &x) in interfaces.iter().enumerate() {
        for (j, &y) in space_nodes.iter().enumerate() {
            let on_boundary = grid.dim == 2 && (j == 0 || j + 1 == space_nodes.len());
            for (it, &t) in time_nodes.iter().enumerate() {
                let kind = if on_boundary {
                    TaskKind::GlobalBoundary
                } else if it == 0 {
                    TaskKind::Initial
                } else {
                    TaskKind::MonteCarlo
                };
                tasks.push(PddTask {
                    task_id: tasks.len() as u64,
                    interface: k,
                    i_space: j,
                    i_time: it,
                    point: [x, y],
                    t,
                    kind,
                });
            }
        }
    }
    Ok(PddPlan {
        grid: grid.clone(),
        interfaces,
        interface_columns,
        space_nodes,
        time_nodes,
        subdomain_columns,
        tasks,
        seed,
    })
}

impl PddPlan {
    pub fn subdomain_grid(&self, s: usize) -> Result<Grid> {
        let (i0, i1) = self.subdomain_columns[s];
        self.grid.columns(i0, i1)
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomain_columns.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskResult {
    pub task_id: u64,
    pub value: f64,
    pub stderr: f64,
    pub pole_flag: bool,
    pub attempts: u32,
    /// Rayon worker that produced the accepted attempt.
    pub worker: usize,
}

/// Monte Carlo settings for the interface tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub estimator: EstimatorConfig,
    pub workers: usize,
    pub fault_rate: f64,
    pub max_attempts: u32,
}

impl McSettings {
    pub fn new(estimator: EstimatorConfig) -> Self {
        Self {
            estimator,
            workers: 1,
            fault_rate: 0.0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

/// Nodal values, `values[interface][i_space][i_time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceValues {
    pub results: Vec<TaskResult>,
    pub values: Vec<Vec<Vec<f64>>>,
    pub stderr: Vec<Vec<Vec<f64>>>,
}

impl InterfaceValues {
    pub fn max_attempts(&self) -> u32 {
        self.results.iter().map(|r| r.attempts).max().unwrap_or(0)
    }
}

fn injected_fault(seed: u64, task_id: u64, attempt: u32, rate: f64) -> bool {
    if rate <= 0.0 {
        return false;
    }
    let mut rng = RngStream::new(seed ^ FAULT_KEY, mix64(task_id) ^ attempt as u64);
    rng.uniform() < rate
}

fn run_task(
    plan: &PddPlan,
    p: &Problem,
    task: &PddTask,
    cfg: &EstimatorConfig,
    bc: &dyn DirichletData,
) -> Result<(f64, f64, bool)> {
    match task.kind {
        TaskKind::Initial => Ok((p.initial_value(&task.point), 0.0, false)),
        TaskKind::GlobalBoundary => Ok((bc.value(&task.point, task.t), 0.0, false)),
        TaskKind::MonteCarlo => {
            let mut cfg = cfg.clone();
            cfg.seed = plan.seed;
            cfg.task_id = task.task_id;
            let e = estimate_point(p, task.point, task.t, &cfg)?;
            Ok((e.value, e.stderr, e.pole_flag))
        }
    }
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// Runs every task of the plan on a pool of `workers` threads. Attempts
/// killed by fault injection are re-queued; a task that fails
/// `max_attempts` times in a row aborts the run.
pub fn compute_interface_values(
    plan: &PddPlan,
    p: &Problem,
    mc: &McSettings,
    bc: &dyn DirichletData,
) -> Result<InterfaceValues> {
    if !(0.0..1.0).contains(&mc.fault_rate) {
        return Err(Error::InvalidArgument(format!(
            "fault rate must lie in [0, 1), got {}",
            mc.fault_rate
        )));
    }
    mc.estimator.validate(p)?;
    let pool = build_pool(mc.workers)?;
    let n = plan.tasks.len();
    let mut done: Vec<Option<TaskResult>> = vec![None; n];
    let mut attempts = vec![0u32; n];
    let mut queue: Vec<usize> = (0..n).collect();
    while !queue.is_empty() {
        let outcomes: Vec<(usize, Option<Result<(f64, f64, bool, usize)>>)> = pool.install(|| {
            queue
                .par_iter()
                .map(|&i| {
                    let task = &plan.tasks[i];
                    if injected_fault(plan.seed, task.task_id, attempts[i] + 1, mc.fault_rate) {
                        return (i, None);
                    }
                    let worker = rayon::current_thread_index().unwrap_or(0);
                    let r = run_task(plan, p, task, &mc.estimator, bc)
                        .map(|(v, s, f)| (v, s, f, worker));
                    (i, Some(r))
                })
                .collect()
        });
        let mut next = Vec::new();
        for (i, outcome) in outcomes {
            attempts[i] += 1;
            match outcome {
                Some(Ok((value, stderr, pole_flag, worker))) => {
                    done[i] = Some(TaskResult {
                        task_id: plan.tasks[i].task_id,
                        value,
                        stderr,
                        pole_flag,
                        attempts: attempts[i],
                        worker,
                    });
                }
                Some(Err(e)) => return Err(e),
                None if attempts[i] >= mc.max_attempts => {
                    return Err(Error::TaskFailed {
                        task_id: plan.tasks[i].task_id,
                        attempts: attempts[i],
                    })
                }
                None => next.push(i),
            }
        }
        queue = next;
    }

    let results: Vec<TaskResult> = done.into_iter().map(|r| r.expect("every task finished")).collect();
    let shape = || {
        vec![vec![vec![0.0; plan.time_nodes.len()]; plan.space_nodes.len()]; plan.interfaces.len()]
    };
    let (mut values, mut stderr) = (shape(), shape());
    for (task, r) in plan.tasks.iter().zip(&results) {
        values[task.interface][task.i_space][task.i_time] = r.value;
        stderr[task.interface][task.i_space][task.i_time] = r.stderr;
    }
    Ok(InterfaceValues {
        results,
        values,
        stderr,
    })
}

enum InterfaceSpline {
    Time(Spline1D),
    SpaceTime(TensorSpline2D),
}

/// Dirichlet data for the subdomains: interface columns carry spline
/// values tabulated at every time level, everything else the global data.
pub struct InterfaceData {
    grid: Grid,
    columns: Vec<usize>,
    /// `table[interface][level][j]`.
    table: Vec<Vec<Vec<f64>>>,
    global: Arc<dyn DirichletData>,
}

impl InterfaceData {
    /// Builds the splines and tabulates them on the interface grid lines.
    pub fn build(plan: &PddPlan, values: &InterfaceValues, global: Arc<dyn DirichletData>) -> Result<Self> {
        let g = &plan.grid;
        let mut table = Vec::with_capacity(plan.interfaces.len());
        for k in 0..plan.interfaces.len() {
            let spline = if g.dim == 1 {
                InterfaceSpline::Time(Spline1D::new(&plan.time_nodes, &values.values[k][0])?)
            } else {
                InterfaceSpline::SpaceTime(TensorSpline2D::new(
                    &plan.space_nodes,
                    &plan.time_nodes,
                    &values.values[k],
                )?)
            };
            let x = plan.interfaces[k];
            let mut levels = Vec::with_capacity(g.n_steps + 1);
            for n in 0..=g.n_steps {
                let t = g.time(n);
                let row = match &spline {
                    InterfaceSpline::Time(s) => vec![s.eval(t)?],
                    InterfaceSpline::SpaceTime(s) => {
                        let slice = s.slice_at_t(t)?;
                        (0..g.ny)
                            .map(|j| {
                                if j == 0 || j + 1 == g.ny {
                                    Ok(global.value(&[x, g.y(j)], t))
                                } else {
                                    slice.eval(g.y(j))
                                }
                            })
                            .collect::<Result<Vec<_>>>()?
                    }
                };
                levels.push(row);
            }
            table.push(levels);
        }
        Ok(Self {
            grid: g.clone(),
            columns: plan.interface_columns.clone(),
            table,
            global,
        })
    }
}

impl DirichletData for InterfaceData {
    fn value(&self, x: &Point, t: f64) -> f64 {
        let g = &self.grid;
        let col = ((x[0] - g.lo[0]) / g.dx).round() as usize;
        if let Some(k) = self.columns.iter().position(|&c| c == col) {
            let level = if t >= g.t_final {
                g.n_steps
            } else {
                (t / g.dt).round() as usize
            };
            let j = if g.dim == 2 {
                ((x[1] - g.lo[1]) / g.dx).round() as usize
            } else {
                0
            };
            return self.table[k][level][j];
        }
        self.global.value(x, t)
    }
}

/// Solves every subdomain with Dirichlet data `bc` and assembles the global
/// field at the final time. Shared interface columns are single-valued
/// because both neighbours take them from `bc`.
pub fn solve_subdomains(plan: &PddPlan, p: &Problem, bc: &dyn DirichletData, workers: usize) -> Result<Field> {
    let pool = build_pool(workers)?;
    let parts: Vec<Result<Field>> = pool.install(|| {
        (0..plan.n_subdomains())
            .into_par_iter()
            .map(|s| {
                let grid = plan.subdomain_grid(s)?;
                solve_observed(p, &grid, bc, |_| {})
            })
            .collect()
    });
    let g = &plan.grid;
    let mut values = vec![0.0; g.len()];
    for (s, part) in parts.into_iter().enumerate() {
        let part = part?;
        let (i0, _) = plan.subdomain_columns[s];
        for j in 0..g.ny {
            for i in 0..part.grid.nx {
                values[g.index(i0 + i, j)] = part.at(i, j);
            }
        }
    }
    Ok(Field {
        grid: g.clone(),
        t: g.t_final,
        values,
    })
}

#[derive(Debug, Clone)]
pub struct PddConfig {
    pub n_sub: usize,
    pub nodal: NodalConfig,
    pub mc: McSettings,
    pub seed: u64,
    /// Global boundary data. With zero Dirichlet data the Monte Carlo paths
    /// are killed on leaving the domain, so both halves of the method solve
    /// the same truncated problem.
    pub boundary: BoundaryPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timings {
    pub mc: f64,
    pub interp: f64,
    pub local: f64,
    pub total: f64,
}

pub struct PddRun {
    pub field: Field,
    pub timings: Timings,
    pub plan: PddPlan,
    pub interface: InterfaceValues,
}

pub fn run_pdd(p: &Problem, grid: &Grid, cfg: &PddConfig) -> Result<PddRun> {
    let start = Instant::now();
    let plan = plan_decomposition(p, grid, cfg.n_sub, cfg.nodal, cfg.seed)?;
    let global = cfg.boundary.data(p);
    let mut mc = cfg.mc.clone();
    if matches!(cfg.boundary, BoundaryPolicy::ZeroDirichlet) && mc.estimator.absorbing.is_none() {
        mc.estimator.absorbing = Some(BoxDomain {
            lo: grid.lo,
            hi: grid.hi,
        });
    }

    let t0 = Instant::now();
    let interface = compute_interface_values(&plan, p, &mc, global.as_ref())?;
    let t_mc = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let data = InterfaceData::build(&plan, &interface, global)?;
    let t_int = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let field = solve_subdomains(&plan, p, &data, mc.workers)?;
    let t_local = t0.elapsed().as_secs_f64();

    Ok(PddRun {
        field,
        timings: Timings {
            mc: t_mc,
            interp: t_int,
            local: t_local,
            total: start.elapsed().as_secs_f64(),
        },
        plan,
        interface,
    })
}

/// Global boundary data taken from the probabilistic representation: the
/// solution is estimated on the domain edges at the nodal points and
/// interpolated by splines. In 2D the edges `x = lo/hi` use `(y, t)`
/// splines and the edges `y = lo/hi` use `(x, t)` splines.
pub fn probabilistic_boundary(
    p: &Problem,
    grid: &Grid,
    nodal: NodalConfig,
    mc: &McSettings,
    seed: u64,
) -> Result<Arc<dyn DirichletData>> {
    let times = linspace(0.0, grid.t_final, nodal.n_time);
    let pool = build_pool(mc.workers)?;
    let estimate = |task_id: u64, x: Point, t: f64| -> Result<f64> {
        if t == 0.0 {
            return Ok(p.initial_value(&x));
        }
        let mut cfg = mc.estimator.clone();
        cfg.seed = seed;
        cfg.task_id = task_id;
        cfg.absorbing = None;
        Ok(estimate_point(p, x, t, &cfg)?.value)
    };
    let edges: Vec<(usize, f64)> = if grid.dim == 1 {
        vec![(0, grid.lo[0]), (0, grid.hi[0])]
    } else {
        vec![(0, grid.lo[0]), (0, grid.hi[0]), (1, grid.lo[1]), (1, grid.hi[1])]
    };
    let mut splines = Vec::new();
    for (e, &(axis, fixed)) in edges.iter().enumerate() {
        let along = if grid.dim == 1 {
            vec![0.0]
        } else {
            let other = 1 - axis;
            linspace(grid.lo[other], grid.hi[other], nodal.n_space)
        };
        let jobs: Vec<(u64, Point, f64)> = along
            .iter()
            .enumerate()
            .flat_map(|(j, &s)| {
                let mut x = [0.0; 2];
                x[axis] = fixed;
                if grid.dim == 2 {
                    x[1 - axis] = s;
                }
                times.iter().enumerate().map(move |(k, &t)| {
                    let id = ((e * 1_000 + j) * 1_000 + k) as u64;
                    (id, x, t)
                })
            })
            .collect();
        let vals: Vec<f64> = pool.install(|| {
            jobs.par_iter()
                .map(|&(id, x, t)| estimate(id, x, t))
                .collect::<Result<Vec<_>>>()
        })?;
        let rows: Vec<Vec<f64>> = vals.chunks(times.len()).map(|c| c.to_vec()).collect();
        let spline = if grid.dim == 1 {
            InterfaceSpline::Time(Spline1D::new(&times, &rows[0])?)
        } else {
            InterfaceSpline::SpaceTime(TensorSpline2D::new(&along, &times, &rows)?)
        };
        splines.push((axis, fixed, spline));
    }
    Ok(Arc::new(EdgeSplines { splines }))
}

struct EdgeSplines {
    splines: Vec<(usize, f64, InterfaceSpline)>,
}

impl DirichletData for EdgeSplines {
    fn value(&self, x: &Point, t: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (axis, fixed, s) in &self.splines {
            let d = (x[*axis] - fixed).abs();
            if d < best.0 {
                let v = match s {
                    InterfaceSpline::Time(s) => s.eval(t),
                    InterfaceSpline::SpaceTime(s) => s.eval(x[1 - axis], t),
                };
                best = (d, v.unwrap_or(f64::NAN));
            }
        }
        best.1
    }
}
