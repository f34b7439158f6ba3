//! Lattice solvers and verification checks for reflected backward stochastic
//! differential equations with monotone drivers.
//!
//! The crate builds a recombining binomial model of Brownian motion, solves
//! plain, penalized and reflected equations on it by implicit backward
//! induction, and turns the structural facts about such equations into
//! runnable checks: comparison, penalization convergence, Skorokhod
//! minimality, a priori bound ratios, stopping-time norms and controlled
//! blow-up probes.
//!
//! Hot loops (penalty sweeps, path sampling, probe sampling, wide layers) are
//! data-parallel via rayon when the default `parallel` feature is enabled and
//! fall back to plain loops without it. Outputs are identical either way.

pub mod analysis;
pub mod bsde;
pub mod driver;
pub mod error;
mod exec;
pub mod lattice;
pub mod paths;
pub mod report;
pub mod scenarios;

pub use bsde::{
    penalization_sweep, snell_envelope, snell_solution, solve_penalized, solve_plain,
    solve_reflected, Instance, Method, Solution, Sweep,
};
pub use driver::{implicit_step, Driver, SolveOptions, StepProblem};
pub use error::{Error, Result};
pub use lattice::{build_lattice, cond_expect, z_from_martingale, Lattice, LatticeSpec, NodeField};
pub use paths::{PathMode, PathPlan};
pub use scenarios::{crr_oracle, divergence_probe, make_instance, DivergenceKind, ScenarioSpec};
