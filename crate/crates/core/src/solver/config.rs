use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::gradient::GradientMode;
use crate::powerflow::PfOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    Centralized,
    Hierarchical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub sigma_u: f64,
    pub sigma_mu: f64,
    pub epsilon: f64,
    /// Stop once both `‖u(t+1) − u(t)‖₂` and `‖μ(t+1) − μ(t)‖₂` fall below this.
    pub lambda_stop: f64,
    pub max_iters: usize,
    pub gradient_mode: GradientMode,
    pub execution: ExecutionMode,
    /// Squared-magnitude bounds, p.u.².
    pub v_lower: f64,
    pub v_upper: f64,
    /// Skip uploads and gradient work for buses with `μ̄ − μ̲ = 0`.
    pub skip_zero_duals: bool,
    pub pf: PfOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sigma_u: 1.5e-2,
            sigma_mu: 5.7e-3,
            epsilon: 1e-3,
            lambda_stop: 1e-6,
            max_iters: 2000,
            gradient_mode: GradientMode::Improved,
            execution: ExecutionMode::Centralized,
            v_lower: 0.95 * 0.95,
            v_upper: 1.05 * 1.05,
            skip_zero_duals: true,
            pf: PfOptions::default(),
        }
    }
}

impl SolverConfig {
    /// Bounds from per-unit magnitudes.
    pub fn with_magnitude_bounds(mut self, v_min: f64, v_max: f64) -> Self {
        self.v_lower = v_min * v_min;
        self.v_upper = v_max * v_max;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("sigma_u", self.sigma_u),
            ("sigma_mu", self.sigma_mu),
            ("epsilon", self.epsilon),
            ("lambda", self.lambda_stop),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(SolverError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.v_lower < self.v_upper) {
            return Err(SolverError::InvalidConfig("v_lower must be below v_upper".into()));
        }
        Ok(())
    }

    /// `ν = σ_μ / σ_u`.
    pub fn nu(&self) -> f64 {
        self.sigma_mu / self.sigma_u
    }
}
