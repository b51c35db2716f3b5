//! Crank–Nicolson finite differences on uniform 1D/2D grids.
//!
//! Diffusion and drift are treated with θ = 1/2 and centred differences.
//! The nonlinearity is explicit in a two-stage Picard form: the predictor
//! uses `f(uⁿ, tₙ)`, the corrector `f((u* + uⁿ)/2, tₙ + Δt/2)`. Both stages
//! share one banded matrix, factored once when the operator does not depend
//! on time. On a spatially constant state the step reduces to the explicit
//! midpoint rule.
//!
//! Unknowns are the interior nodes in row-major order (x fastest), so the
//! 2D matrix has bandwidth equal to the number of interior points per row.

pub mod banded;
pub mod io;

use std::fmt;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::problem::{Point, Problem};
pub use banded::{banded_lu_solve, BandedLu, BandedMatrix};

/// Uniform grid with `Δx = Δy`, including boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
    pub dx: f64,
    /// Time step actually used: `T / n_steps`.
    pub dt: f64,
    pub t_final: f64,
    pub nx: usize,
    /// 1 in one dimension.
    pub ny: usize,
    pub n_steps: usize,
}

fn node_count(lo: f64, hi: f64, dx: f64) -> Result<usize> {
    let cells = (hi - lo) / dx;
    let rounded = cells.round();
    if !(hi > lo) || (cells - rounded).abs() > 1e-9 * rounded.max(1.0) || rounded < 2.0 {
        return Err(Error::InvalidArgument(format!(
            "extent [{lo}, {hi}] is not a whole number (>= 2) of steps {dx}"
        )));
    }
    Ok(rounded as usize + 1)
}

impl Grid {
    /// `dt` is shrunk if needed so that a whole number of steps reaches `t_final`.
    pub fn new(dim: usize, lo: Point, hi: Point, dx: f64, dt: f64, t_final: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(dx > 0.0) || !(dt > 0.0) || !(t_final >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid needs dx > 0, dt > 0, T >= 0 (got {dx}, {dt}, {t_final})"
            )));
        }
        let nx = node_count(lo[0], hi[0], dx)?;
        let ny = if dim == 2 { node_count(lo[1], hi[1], dx)? } else { 1 };
        let ratio = t_final / dt;
        let n_steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        };
        let dt = if n_steps == 0 { dt } else { t_final / n_steps as f64 };
        let (lo, hi) = if dim == 1 {
            ([lo[0], 0.0], [hi[0], 0.0])
        } else {
            (lo, hi)
        };
        Ok(Self {
            dim,
            lo,
            hi,
            dx,
            dt,
            t_final,
            nx,
            ny,
            n_steps,
        })
    }

    /// 1D grid on `[lo, hi]`.
    pub fn line(lo: f64, hi: f64, dx: f64, dt: f64, t_final: f64) -> Result<Self> {
        Self::new(1, [lo, 0.0], [hi, 0.0], dx, dt, t_final)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.lo[0] + i as f64 * self.dx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        if self.dim == 1 {
            0.0
        } else {
            self.lo[1] + j as f64 * self.dx
        }
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Point {
        [self.x(i), self.y(j)]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || i + 1 == self.nx || (self.dim == 2 && (j == 0 || j + 1 == self.ny))
    }

    /// Time of level `n`.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.t_final
        } else {
            n as f64 * self.dt
        }
    }

    /// Column index of `x`, which must lie on a grid line.
    pub fn column_of(&self, x: f64) -> Result<usize> {
        let r = (x - self.lo[0]) / self.dx;
        let i = r.round();
        if (r - i).abs() > 1e-9 || i < 0.0 || i as usize >= self.nx {
            return Err(Error::InvalidArgument(format!("x = {x} is not a grid column")));
        }
        Ok(i as usize)
    }

    /// The sub-grid spanning columns `i0..=i1`.
    pub fn columns(&self, i0: usize, i1: usize) -> Result<Grid> {
        if i1 >= self.nx || i1 < i0 + 2 {
            return Err(Error::InvalidArgument(format!(
                "columns {i0}..={i1} do not form a sub-grid of {} columns",
                self.nx
            )));
        }
        let mut g = self.clone();
        g.lo[0] = self.x(i0);
        g.hi[0] = self.x(i1);
        g.nx = i1 - i0 + 1;
        Ok(g)
    }
}

/// Nodal values at one time level, `values[j * nx + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub t: f64,
    pub values: Vec<f64>,
}

impl Field {
    pub fn from_fn(grid: &Grid, t: f64, f: impl Fn(&Point) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(&grid.point(i, j)));
            }
        }
        Self {
            grid: grid.clone(),
            t,
            values,
        }
    }

    pub fn initial(p: &Problem, grid: &Grid) -> Self {
        Self::from_fn(grid, 0.0, |x| p.initial_value(x))
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at an arbitrary point by (bi)linear interpolation.
    pub fn interpolate(&self, x: &Point) -> f64 {
        let g = &self.grid;
        let locate = |v: f64, lo: f64, n: usize| {
            let r = ((v - lo) / g.dx).clamp(0.0, (n - 1) as f64);
            let i = (r.floor() as usize).min(n.saturating_sub(2));
            (i, r - i as f64)
        };
        let (i, fx) = locate(x[0], g.lo[0], g.nx);
        if g.dim == 1 {
            return self.at(i, 0) * (1.0 - fx) + self.at(i + 1, 0) * fx;
        }
        let (j, fy) = locate(x[1], g.lo[1], g.ny);
        let bottom = self.at(i, j) * (1.0 - fx) + self.at(i + 1, j) * fx;
        let top = self.at(i, j + 1) * (1.0 - fx) + self.at(i + 1, j + 1) * fx;
        bottom * (1.0 - fy) + top * fy
    }

    /// `max |self - other|` on a shared grid.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::InvalidArgument("fields live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Dirichlet values on the boundary nodes of a grid.
pub trait DirichletData: Send + Sync {
    fn value(&self, x: &Point, t: f64) -> f64;
}

pub struct ZeroDirichlet;

impl DirichletData for ZeroDirichlet {
    fn value(&self, _x: &Point, _t: f64) -> f64 {
        0.0
    }
}

impl<F: Fn(&Point, f64) -> f64 + Send + Sync> DirichletData for F {
    fn value(&self, x: &Point, t: f64) -> f64 {
        self(x, t)
    }
}

/// Boundary values from the spatially uniform problem `u' = f(u, x, t)`,
/// `u(0) = g(x)`, solved pointwise with RK4. Suits data that tends to
/// constants at the far field, where diffusion and drift vanish.
pub struct FarField {
    problem: Problem,
    h: f64,
    cache: Mutex<HashMap<(u64, u64), (f64, f64)>>,
}

impl FarField {
    pub fn new(problem: &Problem) -> Self {
        Self {
            problem: problem.clone(),
            h: 1e-3,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn rk4(&self, x: &Point, mut t: f64, mut u: f64, t_end: f64) -> f64 {
        let f = |u: f64, t: f64| self.problem.eval_nonlinearity(u, x, t);
        while t < t_end {
            let h = self.h.min(t_end - t);
            let k1 = f(u, t);
            let k2 = f(u + 0.5 * h * k1, t + 0.5 * h);
            let k3 = f(u + 0.5 * h * k2, t + 0.5 * h);
            let k4 = f(u + h * k3, t + h);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
            if t_end - t < 1e-14 {
                break;
            }
        }
        u
    }
}

impl DirichletData for FarField {
    fn value(&self, x: &Point, t: f64) -> f64 {
        let key = (x[0].to_bits(), x[1].to_bits());
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        let (t0, u0) = match cache.get(&key) {
            Some(&(tc, uc)) if tc <= t => (tc, uc),
            _ => (0.0, self.problem.initial_value(x)),
        };
        let u = self.rk4(x, t0, u0, t);
        cache.insert(key, (t, u));
        u
    }
}

#[derive(Clone)]
pub enum BoundaryPolicy {
    ZeroDirichlet,
    /// See [`FarField`].
    FarField,
    /// Values supplied by the caller (interface splines, Monte Carlo data).
    Data(Arc<dyn DirichletData>),
}

impl fmt::Debug for BoundaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryPolicy::ZeroDirichlet => f.write_str("ZeroDirichlet"),
            BoundaryPolicy::FarField => f.write_str("FarField"),
            BoundaryPolicy::Data(_) => f.write_str("Data(..)"),
        }
    }
}

impl BoundaryPolicy {
    pub fn data(&self, p: &Problem) -> Arc<dyn DirichletData> {
        match self {
            BoundaryPolicy::ZeroDirichlet => Arc::new(ZeroDirichlet),
            BoundaryPolicy::FarField => Arc::new(FarField::new(p)),
            BoundaryPolicy::Data(d) => d.clone(),
        }
    }
}

/// Matrices and scratch for stepping one problem on one grid.
pub struct CrankNicolson<'a> {
    problem: &'a Problem,
    grid: Grid,
    nxi: usize,
    nyi: usize,
    /// Reused factorization when the operator is time-independent.
    frozen: Option<BandedLu>,
}

impl<'a> CrankNicolson<'a> {
    pub fn new(problem: &'a Problem, grid: &Grid) -> Result<Self> {
        problem.check()?;
        if problem.dim != grid.dim {
            return Err(Error::InvalidArgument(format!(
                "problem is {}D, grid is {}D",
                problem.dim, grid.dim
            )));
        }
        let nxi = grid.nx - 2;
        let nyi = if grid.dim == 2 { grid.ny - 2 } else { 1 };
        let mut cn = Self {
            problem,
            grid: grid.clone(),
            nxi,
            nyi,
            frozen: None,
        };
        if !problem.operator_is_time_dependent() {
            cn.frozen = Some(cn.assemble(0.0)?);
        }
        Ok(cn)
    }

    #[inline]
    fn unknown(&self, i: usize, j: usize) -> usize {
        if self.grid.dim == 1 {
            i - 1
        } else {
            (j - 1) * self.nxi + (i - 1)
        }
    }

    fn interior(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (j0, j1) = if self.grid.dim == 1 { (0, 1) } else { (1, self.grid.ny - 1) };
        (j0..j1).flat_map(move |j| (1..self.grid.nx - 1).map(move |i| (i, j)))
    }

    /// Stencil weights (centre, x-, x+, y-, y+) of `A` at node `(i, j)`.
    #[inline]
    fn stencil(&self, i: usize, j: usize, t: f64) -> [f64; 5] {
        let x = self.grid.point(i, j);
        let h2 = self.grid.dx * self.grid.dx;
        let mut w = [0.0; 5];
        for axis in 0..self.grid.dim {
            let a = self.problem.diffusion[axis].eval(&x, t) / h2;
            let b = self.problem.drift[axis].eval(&x, t) / (2.0 * self.grid.dx);
            w[0] -= 2.0 * a;
            w[1 + 2 * axis] += a - b;
            w[2 + 2 * axis] += a + b;
        }
        w
    }

    /// `I - (Δt/2) A` on the interior unknowns, factored.
    fn assemble(&self, t: f64) -> Result<BandedLu> {
        let n = self.nxi * self.nyi;
        let band = if self.grid.dim == 1 { 1 } else { self.nxi };
        let mut m = BandedMatrix::new(n, band, band);
        let half = 0.5 * self.grid.dt;
        for (i, j) in self.interior() {
            let r = self.unknown(i, j);
            let w = self.stencil(i, j, t);
            m.add(r, r, 1.0 - half * w[0]);
            let mut neighbours = vec![(i - 1, j, w[1]), (i + 1, j, w[2])];
            if self.grid.dim == 2 {
                neighbours.push((i, j - 1, w[3]));
                neighbours.push((i, j + 1, w[4]));
            }
            for (ii, jj, wt) in neighbours {
                if !self.grid.is_boundary(ii, jj) {
                    m.add(r, self.unknown(ii, jj), -half * wt);
                }
            }
        }
        m.factor()
    }

    /// `A u` at the interior nodes, using boundary entries of `u`.
    fn apply(&self, u: &[f64], t: f64) -> Vec<f64> {
        let g = &self.grid;
        let mut out = vec![0.0; self.nxi * self.nyi];
        for (i, j) in self.interior() {
            let w = self.stencil(i, j, t);
            let mut v = w[0] * u[g.index(i, j)] + w[1] * u[g.index(i - 1, j)] + w[2] * u[g.index(i + 1, j)];
            if g.dim == 2 {
                v += w[3] * u[g.index(i, j - 1)] + w[4] * u[g.index(i, j + 1)];
            }
            out[self.unknown(i, j)] = v;
        }
        out
    }

    fn nonlinearity(&self, u: &[f64], t: f64) -> Vec<f64> {
        self.interior()
            .map(|(i, j)| {
                let x = self.grid.point(i, j);
                self.problem.eval_nonlinearity(u[self.grid.index(i, j)], &x, t)
            })
            .collect()
    }

    fn fill_boundary(&self, u: &mut [f64], bc: &dyn DirichletData, t: f64) {
        let g = &self.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if g.is_boundary(i, j) {
                    u[g.index(i, j)] = bc.value(&g.point(i, j), t);
                }
            }
        }
    }

    /// One step from `field.t` to `field.t + Δt`.
    pub fn step(&self, field: &Field, bc: &dyn DirichletData) -> Result<Field> {
        let g = &self.grid;
        let dt = g.dt;
        let (t0, t1) = (field.t, field.t + dt);
        let tm = field.t + 0.5 * dt;
        let rebuilt;
        let lu = match &self.frozen {
            Some(lu) => lu,
            None => {
                rebuilt = self.assemble(tm)?;
                &rebuilt
            }
        };

        let mut next = vec![0.0; g.len()];
        self.fill_boundary(&mut next, bc, t1);
        let explicit = self.apply(&field.values, tm);
        let mut boundary_only = next.clone();
        for (i, j) in self.interior() {
            boundary_only[g.index(i, j)] = 0.0;
        }
        let implicit_bc = self.apply(&boundary_only, tm);
        let linear: Vec<f64> = self
            .interior()
            .map(|(i, j)| {
                let r = self.unknown(i, j);
                field.values[g.index(i, j)] + 0.5 * dt * (explicit[r] + implicit_bc[r])
            })
            .collect();

        let f0 = self.nonlinearity(&field.values, t0);
        let mut rhs: Vec<f64> = linear.iter().zip(&f0).map(|(l, f)| l + dt * f).collect();
        lu.solve(&mut rhs);

        let mut mid = field.values.clone();
        for (i, j) in self.interior() {
            let k = g.index(i, j);
            mid[k] = 0.5 * (rhs[self.unknown(i, j)] + field.values[k]);
        }
        let f1 = self.nonlinearity(&mid, tm);
        let mut rhs: Vec<f64> = linear.iter().zip(&f1).map(|(l, f)| l + dt * f).collect();
        lu.solve(&mut rhs);

        for (i, j) in self.interior() {
            next[g.index(i, j)] = rhs[self.unknown(i, j)];
        }
        if let Some(bad) = next.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Crank–Nicolson step at t = {t1}: {bad}")));
        }
        Ok(Field {
            grid: g.clone(),
            t: t1,
            values: next,
        })
    }
}

/// Single Crank–Nicolson step (builds the matrices every call).
pub fn step_cn(p: &Problem, field: &Field, bc: &dyn DirichletData) -> Result<Field> {
    CrankNicolson::new(p, &field.grid)?.step(field, bc)
}

/// Marches from `g` to `grid.t_final`; `observe` sees every level, the
/// initial one included.
pub fn solve_observed(
    p: &Problem,
    grid: &Grid,
    bc: &dyn DirichletData,
    mut observe: impl FnMut(&Field),
) -> Result<Field> {
    let cn = CrankNicolson::new(p, grid)?;
    let mut field = Field::initial(p, grid);
    observe(&field);
    for n in 0..grid.n_steps {
        field = cn.step(&field, bc)?;
        field.t = grid.time(n + 1);
        observe(&field);
    }
    Ok(field)
}

/// Field at `grid.t_final`.
pub fn solve(p: &Problem, grid: &Grid, policy: &BoundaryPolicy) -> Result<Field> {
    let bc = policy.data(p);
    solve_observed(p, grid, bc.as_ref(), |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BuiltinProblem, Coefficient, InitialData};

    #[test]
    fn grid_checks() {
        assert!(Grid::line(-1.0, 1.0, 0.3, 0.1, 1.0).is_err());
        let g = Grid::line(-1.0, 1.0, 0.25, 0.1, 1.0).unwrap();
        assert_eq!((g.nx, g.ny, g.n_steps), (9, 1, 10));
        let g = Grid::line(-1.0, 1.0, 0.25, 0.3, 1.0).unwrap();
        assert_eq!(g.n_steps, 4);
        assert!((g.dt - 0.25).abs() < 1e-15);
        let g2 = Grid::new(2, [-1.0, -2.0], [1.0, 2.0], 0.5, 0.1, 0.5).unwrap();
        assert_eq!((g2.nx, g2.ny), (5, 9));
        assert_eq!(g2.columns(1, 3).unwrap().nx, 3);
        assert_eq!(g2.column_of(0.0).unwrap(), 2);
        assert!(g2.column_of(0.1).is_err());
    }

    #[test]
    fn zero_stays_zero() {
        let p = Problem::new(1, InitialData::Constant(0.0)).with_term(2, Coefficient::Constant(-1.0));
        let g = Grid::line(-2.0, 2.0, 0.1, 0.01, 0.1).unwrap();
        let u = solve(&p, &g, &BoundaryPolicy::ZeroDirichlet).unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn final_time_zero_is_initial_data() {
        let p = BuiltinProblem::Ex1.problem();
        let g = Grid::line(-5.0, 5.0, 0.5, 0.1, 0.0).unwrap();
        let u = solve(&p, &g, &BoundaryPolicy::ZeroDirichlet).unwrap();
        assert_eq!(u, Field::initial(&p, &g));
    }

    #[test]
    fn spatially_constant_state_is_explicit_midpoint() {
        // Dirichlet data stands in for periodicity; a vanishing diffusion
        // keeps the boundary from feeding back into the predictor stage.
        let p = Problem::new(1, InitialData::Constant(0.8))
            .with_term(2, Coefficient::Constant(-1.3))
            .with_term(3, Coefficient::Constant(0.4))
            .with_diffusion(0, Coefficient::Constant(1e-12));
        let dt = 0.05;
        let g = Grid::line(0.0, 1.0, 0.1, dt, dt).unwrap();
        let f = |u: f64| -1.3 * u * u + 0.4 * u * u * u;
        let u0 = 0.8;
        let midpoint = u0 + dt * f(u0 + 0.5 * dt * f(u0));
        let bc = move |_: &Point, _: f64| midpoint;
        let next = step_cn(&p, &Field::initial(&p, &g), &bc).unwrap();
        for v in &next.values {
            assert!((v - midpoint).abs() < 1e-14);
        }
        // and the midpoint rule is within O(dt³) of the exact flow
        let exact = FarField::new(&p).value(&[0.5, 0.0], dt);
        assert!((midpoint - exact).abs() < dt.powi(3));
    }

    #[test]
    fn far_field_matches_logistic_ode() {
        // u' = -u², u(0) = g  →  u = g / (1 + g t)
        let p = Problem::new(1, InitialData::Constant(2.0)).with_term(2, Coefficient::Constant(-1.0));
        let ff = FarField::new(&p);
        for t in [0.1, 0.5, 0.7, 1.5] {
            assert!((ff.value(&[3.0, 0.0], t) - 2.0 / (1.0 + 2.0 * t)).abs() < 1e-10);
        }
        assert!((ff.value(&[3.0, 0.0], 0.2) - 2.0 / 1.4).abs() < 1e-10);
    }

    #[test]
    fn two_dimensional_zero_dirichlet_bounds() {
        let p = BuiltinProblem::Ex4 {
            a: 0.25,
            ax: 3.0,
            ay: 3.0,
        }
        .problem();
        let g = Grid::new(2, [-4.0, -4.0], [4.0, 4.0], 0.5, 0.01, 0.2).unwrap();
        let u = solve(&p, &g, &BoundaryPolicy::ZeroDirichlet).unwrap();
        assert!(u.min() >= -2.0 && u.max() <= 1e-12, "{} {}", u.min(), u.max());
    }

    #[test]
    fn drift_transports() {
        // u_t = a u_xx + b u_x transports data to the left at speed b.
        let p = Problem::new(
            1,
            InitialData::HeatKernel {
                amplitude: 1.0,
                spread: 1.0,
            },
        )
        .with_term(2, Coefficient::Constant(0.0))
        .with_drift(0, Coefficient::Constant(1.0));
        let g = Grid::line(-20.0, 20.0, 0.05, 0.005, 1.0).unwrap();
        let u = solve(&p, &g, &BoundaryPolicy::ZeroDirichlet).unwrap();
        let exact = |x: f64| (-(x + 1.0).powi(2) / 8.0).exp() / (8.0 * std::f64::consts::PI).sqrt();
        for i in (0..g.nx).step_by(40) {
            assert!((u.at(i, 0) - exact(g.x(i))).abs() < 1e-4);
        }
    }
}
