//! Branching random-tree Monte Carlo for semilinear parabolic PDEs
//! `u_t = Lu + Σ c_j(x,t) u^j`, with Padé summation of the branch series,
//! a Crank–Nicolson reference solver, and probabilistic domain decomposition.

pub mod error;
pub mod estimator;
pub mod fdm;
pub mod interp;
pub mod pade;
pub mod pdd;
pub mod problem;
pub mod rng;
pub mod sde;
pub mod trees;

pub use error::{Error, Result};
