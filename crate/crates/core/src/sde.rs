//! Euler–Maruyama integration of `dβ = b dt + σ dW` for the operator `L`.
//!
//! With `L = a ∂²` the generator `(σ²/2) ∂²` requires `σ = sqrt(2a)`.
//! Coefficients are evaluated at PDE time `horizon - t_elapsed`, i.e. paths
//! run backwards in PDE time from the point where the solution is wanted.

use crate::error::{Error, Result};
use crate::problem::{Point, Problem};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub position: Point,
    pub t_elapsed: f64,
    /// PDE time at `t_elapsed = 0`.
    pub horizon: f64,
}

impl PathState {
    pub fn new(position: Point, horizon: f64) -> Self {
        Self {
            position,
            t_elapsed: 0.0,
            horizon,
        }
    }

    #[inline]
    fn pde_time(&self) -> f64 {
        (self.horizon - self.t_elapsed).max(0.0)
    }
}

/// Axis-aligned box; paths leaving it are absorbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub lo: Point,
    pub hi: Point,
}

impl BoxDomain {
    #[inline]
    pub fn contains(&self, x: &Point, dim: usize) -> bool {
        (0..dim).all(|i| x[i] > self.lo[i] && x[i] < self.hi[i])
    }
}

/// Per-problem stepping setup, shared by every path of a run.
#[derive(Debug, Clone)]
pub struct PathSimulator<'a> {
    problem: &'a Problem,
    dt: f64,
    absorbing: Option<BoxDomain>,
    constant: Option<([f64; 2], [f64; 2])>,
}

impl<'a> PathSimulator<'a> {
    pub fn new(problem: &'a Problem, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let constant = if problem.has_constant_operator() {
            let mut sigma = [0.0; 2];
            let mut drift = [0.0; 2];
            for i in 0..problem.dim {
                sigma[i] = (2.0 * problem.diffusion[i].as_constant().unwrap_or(0.0)).sqrt();
                drift[i] = problem.drift[i].as_constant().unwrap_or(0.0);
            }
            Some((sigma, drift))
        } else {
            None
        };
        Ok(Self {
            problem,
            dt,
            absorbing: None,
            constant,
        })
    }

    pub fn with_absorbing(mut self, domain: Option<BoxDomain>) -> Self {
        self.absorbing = domain;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn absorbing(&self) -> Option<&BoxDomain> {
        self.absorbing.as_ref()
    }

    /// Advances by exactly `duration`, landing on the end time with a partial
    /// final step. Returns `false` if the path left the absorbing box.
    pub fn advance(&self, state: &mut PathState, duration: f64, rng: &mut RngStream) -> bool {
        if duration <= 0.0 {
            return true;
        }
        let dim = self.problem.dim;
        let start = state.t_elapsed;
        let mut remaining = duration;
        while remaining > 0.0 {
            let h = if remaining > self.dt * (1.0 + 1e-12) {
                self.dt
            } else {
                remaining
            };
            let sqrt_h = h.sqrt();
            match &self.constant {
                Some((sigma, drift)) => {
                    for i in 0..dim {
                        state.position[i] += drift[i] * h + sigma[i] * sqrt_h * rng.normal();
                    }
                }
                None => {
                    let t = state.pde_time();
                    let x = state.position;
                    for i in 0..dim {
                        let a = self.problem.diffusion[i].eval(&x, t);
                        let b = self.problem.drift[i].eval(&x, t);
                        state.position[i] += b * h + (2.0 * a).sqrt() * sqrt_h * rng.normal();
                    }
                }
            }
            remaining -= h;
            state.t_elapsed += h;
            if let Some(domain) = &self.absorbing {
                if !domain.contains(&state.position, dim) {
                    state.t_elapsed = start + duration;
                    return false;
                }
            }
        }
        state.t_elapsed = start + duration;
        true
    }
}

/// One-shot form of [`PathSimulator::advance`] without absorption.
pub fn advance_path(
    state: PathState,
    problem: &Problem,
    duration: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<PathState> {
    if duration < 0.0 {
        return Err(Error::InvalidArgument(format!("negative duration {duration}")));
    }
    let sim = PathSimulator::new(problem, dt)?;
    let mut s = state;
    sim.advance(&mut s, duration, rng);
    Ok(s)
}

/// Mean Euler step when uniformly distributed split times also cut the grid:
/// `Δt - Δt²/(2t)`.
pub fn expected_step(dt: f64, t: f64) -> Result<f64> {
    if !(dt > 0.0) || dt > t {
        return Err(Error::InvalidArgument(format!(
            "expected step needs 0 < dt <= t, got dt = {dt}, t = {t}"
        )));
    }
    Ok(dt - dt * dt / (2.0 * t))
}
