//! Voltage-to-injection sensitivities: lossless path sums, the loss-aware
//! improved evaluation, and a finite-difference oracle on the nonlinear
//! model.

mod error;
mod finite_diff;
mod improved;
mod linear;

pub use error::{gradient_error, GradientErrorNorms};
pub use finite_diff::{fd_column, finite_difference_gradient, finite_difference_table, DEFAULT_FD_STEP};
pub use improved::{
    ell_derivative_hat, improved_entry_expanded, improved_entry_rewrite, improved_gradients,
    local_terms, LocalTerms,
};
pub use linear::{linear_gradients, PathSums};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NodeIdx, RadialNetwork};
use crate::powerflow::PowerFlowError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    Linear,
    Improved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientTag {
    Linear,
    Improved,
    FiniteDifference,
}

impl From<GradientMode> for GradientTag {
    fn from(m: GradientMode) -> Self {
        match m {
            GradientMode::Linear => GradientTag::Linear,
            GradientMode::Improved => GradientTag::Improved,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectionKind {
    P,
    Q,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradientError {
    #[error("state does not belong to this network")]
    StateMismatch,
    #[error("squared voltage {value:.3e} at bus {bus} is too small")]
    NumericalDegeneracy { bus: usize, value: f64 },
    #[error("imaginary residue {residue:.3e} exceeds the realness threshold")]
    ImaginaryResidue { residue: f64 },
    #[error("gradient tables index different node sets")]
    IndexMismatch,
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

/// Threshold on imaginary parts that should cancel analytically.
pub const REALNESS_TOL: f64 = 1e-12;
/// Smallest squared voltage the improved evaluation accepts.
pub const MIN_SQUARED_VOLTAGE: f64 = 1e-6;

/// Dense `∂v/∂p`, `∂v/∂q` over (observed node, actuated node) pairs.
#[derive(Clone, Debug)]
pub struct GradientTable {
    pub tag: GradientTag,
    pub observed: Vec<NodeIdx>,
    pub actuated: Vec<NodeIdx>,
    pub dv_dp: DMatrix<f64>,
    pub dv_dq: DMatrix<f64>,
}

impl GradientTable {
    pub(crate) fn all_nodes(network: &RadialNetwork, tag: GradientTag) -> Self {
        let n = network.nodes().len();
        GradientTable {
            tag,
            observed: (0..n).collect(),
            actuated: (0..n).collect(),
            dv_dp: DMatrix::zeros(n, n),
            dv_dq: DMatrix::zeros(n, n),
        }
    }

    pub fn get(&self, kind: InjectionKind) -> &DMatrix<f64> {
        match kind {
            InjectionKind::P => &self.dv_dp,
            InjectionKind::Q => &self.dv_dq,
        }
    }
}
