//! Fixed-schedule ODE solvers for flow-model sampling.
//!
//! Flow generative models transport Gaussian noise at `t = 1` to data at
//! `t = 0` by integrating `dx/dt = v(x, t)` along a decreasing time
//! schedule. This crate provides:
//!
//! - the shared domain types (states, schedules, velocity fields, and the
//!   bounded cache of previous velocity evaluations) in [`core`],
//! - the coefficient machinery that matches cached velocity differences to
//!   Taylor-integral weights on non-uniform grids in [`coeffs`],
//! - four steppers — Euler, Heun, RK-3, and the cached multistep
//!   predictor-corrector (`flow`) — plus the schedule-walking sampler in
//!   [`solvers`],
//! - closed-form velocity fields with known solutions for convergence and
//!   quality benchmarks in [`fields`],
//! - error norms, empirical-order fitting, and distribution distances in
//!   [`metrics`],
//! - the config-driven experiment runner behind the `flowsolve` binary in
//!   [`cli`] and the SVG emitter in [`plot`].
//!
//! All arithmetic is `f64`. Time runs from 1 (noise) down to 0 (data), so
//! step sizes are negative throughout; nothing in the solvers assumes a
//! positive step.

pub mod cli;
pub mod coeffs;
pub mod core;
pub mod fields;
pub mod metrics;
pub mod plot;
pub mod solvers;

pub use crate::core::{HistoryBuffer, State, TimeSchedule, VelocityField, VelocityRecord};
pub use crate::solvers::{sample, Method, SolverConfig, TrajectoryRecord};

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("numerical failure at t = {t}: {msg}")]
    NumericalFailure { t: f64, msg: String },

    /// Malformed grid-field file; `offset` is the byte position of the
    /// first inconsistency.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    /// A solver step failed; `index` is the 1-based step within the schedule.
    #[error("step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
