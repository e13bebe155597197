//! Regularized primal-dual voltage control.
//!
//! [`run_iteration`] performs one primal step, a nonlinear power flow (the
//! "physical" measurement), one dual step, and then recomputes the coupling
//! term `(∂v/∂u)ᵀ(μ̄ − μ̲)` either directly or through the regional/central
//! controller protocol in [`hierarchy`].

mod config;
mod coupling;
mod diagnostics;
mod dynamics;
pub mod hierarchy;
mod kkt;
mod run;

pub use config::{ExecutionMode, SolverConfig};
pub use coupling::{coupling_centralized, Coupling, CouplingEngine};
pub use diagnostics::{
    ball_radius, contraction_factor, convergence_diagnostics, reference_solution,
    ConvergenceDiagnostics, ProbeSpec, RhoInputs, A_NORM,
};
pub use dynamics::{dual_step, objective, objective_gradient, primal_step, project_box, Duals};
pub use hierarchy::{ChannelCount, CombineTarget, HierarchicalEngine, IterationMessages, MessageLedger};
pub use kkt::{kkt_residual, KktResidual};
pub use run::{
    initial_state, run_iteration, solve, solve_observed, voltage_violations, SolveOutcome,
    SolverState, StopReason,
};

use thiserror::Error;

use crate::gradient::GradientError;
use crate::network::BusIdx;
use crate::powerflow::PowerFlowError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Gradient(#[from] GradientError),
    #[error("protocol error: {0}")]
    InternalProtocol(String),
    #[error("bus {bus} is not a member of subtree {subtree}")]
    TargetNotInSubtree { subtree: usize, bus: BusIdx },
    #[error("missing upload from regional controller {0}")]
    MissingUpload(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invariant violated at iteration {iter}: {what}")]
    Invariant { iter: usize, what: String },
    #[error("need at least 2 probe samples, got {0}")]
    InsufficientSamples(usize),
}
