//! Power flow models on a radial network.
//!
//! Three models share [`PowerFlowState`]: the nonlinear branch flow model
//! ([`solve_nonlinear_pf`]), the lossless linearization ([`solve_linear_pf`])
//! and the balanced-voltage model with losses ([`solve_bva_pf`]).

mod bva;
mod linear;
mod nonlinear;
mod residual;
mod voltage_error;

pub use bva::{solve_bva_pf, solve_bva_pf_with, EllClosure};
pub use linear::solve_linear_pf;
pub use nonlinear::{solve_nonlinear_pf, solve_nonlinear_pf_with};
pub use residual::{pf_residuals, ResidualReport};
pub use voltage_error::{voltage_error_decomposition, VoltageErrorReport};

use thiserror::Error;

use crate::network::{NodeIdx, RadialNetwork};
use crate::phase::{PhaseMatrix, PhaseVector, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("power flow did not converge after {sweeps} sweeps (last change {last_change:.3e})")]
    Diverged { sweeps: usize, last_change: f64 },
    #[error("state does not belong to this network")]
    StateMismatch,
    #[error("injection vector has {got} entries, network has {expected} nodes")]
    InjectionLength { got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelTag {
    Nonlinear,
    Linear,
    Bva,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfOptions {
    /// Stop when the largest change between sweeps falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tol: 1e-8,
            max_sweeps: 100,
        }
    }
}

impl PfOptions {
    /// Tight settings for finite-difference work, where solver error is
    /// divided by the perturbation step.
    pub fn tight() -> Self {
        PfOptions {
            tol: 1e-13,
            max_sweeps: 300,
        }
    }
}

/// Per-bus and per-line electrical state.
#[derive(Clone, Debug)]
pub struct PowerFlowState {
    pub model: ModelTag,
    /// `v_i = V_i V_i^H` on the bus's energized phases.
    pub v: Vec<PhaseMatrix>,
    /// Sending-end power `S_ij`, indexed by line.
    pub s: Vec<PhaseMatrix>,
    /// `ℓ_ij`, all zero for the linear model.
    pub ell: Vec<PhaseMatrix>,
    /// `Λ_ij`, the diagonal of `S_ij`.
    pub lambda: Vec<PhaseVector>,
    /// Node injections the state was solved for.
    pub u: Vec<C64>,
    /// Complex voltages and currents, nonlinear model only.
    pub voltages: Option<Vec<PhaseVector>>,
    pub currents: Option<Vec<PhaseVector>>,
    pub sweeps: usize,
}

impl PowerFlowState {
    pub(crate) fn matches(&self, network: &RadialNetwork) -> bool {
        self.v.len() == network.num_buses()
            && self.s.len() == network.num_lines()
            && self.u.len() == network.nodes().len()
            && (0..network.num_buses()).all(|b| self.v[b].phases() == network.phases(b))
    }

    /// Squared magnitude `v_j^{φφ}` for a node.
    pub fn v_node(&self, network: &RadialNetwork, k: NodeIdx) -> f64 {
        let n = network.nodes()[k];
        self.v[n.bus].get(n.phase, n.phase).re
    }

    /// Squared magnitudes for all nodes.
    pub fn v_nodes(&self, network: &RadialNetwork) -> Vec<f64> {
        (0..network.nodes().len())
            .map(|k| self.v_node(network, k))
            .collect()
    }
}

pub(crate) fn check_injections(network: &RadialNetwork, u: &[C64]) -> Result<(), PowerFlowError> {
    let expected = network.nodes().len();
    if u.len() != expected {
        return Err(PowerFlowError::InjectionLength {
            got: u.len(),
            expected,
        });
    }
    Ok(())
}

/// Injection vector of bus `b` on its energized phases.
pub(crate) fn bus_injection(network: &RadialNetwork, u: &[C64], b: usize) -> PhaseVector {
    PhaseVector::from_fn(network.phases(b), |p| {
        network.node(b, p).map_or(C64::new(0.0, 0.0), |k| u[k])
    })
}

/// Slack `v_0 = V_0 V_0^H`.
pub(crate) fn slack_v(network: &RadialNetwork) -> PhaseMatrix {
    let v0 = network.slack_voltage();
    PhaseMatrix::outer(&v0, &v0)
}
