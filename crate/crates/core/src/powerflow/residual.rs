use nalgebra::{Complex, DMatrix};

use super::{bus_injection, slack_v, PowerFlowError, PowerFlowState};
use crate::network::RadialNetwork;
use crate::phase::PhaseMatrix;

/// Residuals of a state against the nonlinear branch flow equations.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    /// Voltage equation, ∞-norm per line.
    pub voltage: Vec<f64>,
    /// Power balance, ∞-norm per bus (zero for the slack).
    pub balance: Vec<f64>,
    /// Second-largest eigenvalue magnitude of `[[v_i, S], [S^H, ℓ]]`.
    pub rank1_defect: Vec<f64>,
    /// Smallest eigenvalue of the same block (negative means not PSD).
    pub min_eigenvalue: Vec<f64>,
    pub ell_trace: Vec<f64>,
    /// Deviation of the slack-bus voltage from `V_0 V_0^H`.
    pub slack: f64,
}

impl ResidualReport {
    pub fn max_voltage(&self) -> f64 {
        self.voltage.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_balance(&self) -> f64 {
        self.balance.iter().copied().fold(0.0, f64::max)
    }

    /// Largest `defect / trace(ℓ)` over lines carrying current.
    pub fn max_relative_rank1_defect(&self) -> f64 {
        self.rank1_defect
            .iter()
            .zip(&self.ell_trace)
            .filter(|(_, t)| **t > 0.0)
            .map(|(d, t)| d / t)
            .fold(0.0, f64::max)
    }
}

pub fn pf_residuals(
    network: &RadialNetwork,
    state: &PowerFlowState,
) -> Result<ResidualReport, PowerFlowError> {
    if !state.matches(network) {
        return Err(PowerFlowError::StateMismatch);
    }
    let mut voltage = Vec::with_capacity(network.num_lines());
    let mut rank1_defect = Vec::with_capacity(network.num_lines());
    let mut min_eigenvalue = Vec::with_capacity(network.num_lines());
    let mut ell_trace = Vec::with_capacity(network.num_lines());
    for (l, line) in network.lines().iter().enumerate() {
        let (i, j) = network.ends(l);
        let vi = state.v[i].project(line.phases);
        let zh = line.z.adjoint();
        let s = state.s[l];
        let ell = state.ell[l];
        let rhs = vi - (s * zh + line.z * s.adjoint()) + line.z * ell * zh;
        voltage.push((state.v[j] - rhs).max_abs());

        let eig = block_eigenvalues(&vi, &s, &ell);
        let mut mags: Vec<f64> = eig.iter().map(|x| x.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        rank1_defect.push(mags.get(1).copied().unwrap_or(0.0));
        min_eigenvalue.push(eig.iter().copied().fold(f64::INFINITY, f64::min));
        ell_trace.push(ell.trace().re);
    }

    let mut balance = vec![0.0; network.num_buses()];
    for (b, slot) in balance.iter_mut().enumerate() {
        let Some(l) = network.parent_line(b) else {
            continue;
        };
        let line = network.line(l);
        let mut r = (state.s[l] - line.z * state.ell[l]).diag() + bus_injection(network, &state.u, b);
        for &c in network.child_lines(b) {
            r = r - state.s[c].diag().project(line.phases);
        }
        *slot = r.max_abs();
    }

    let slack = (state.v[network.slack_idx()] - slack_v(network)).max_abs();
    Ok(ResidualReport {
        voltage,
        balance,
        rank1_defect,
        min_eigenvalue,
        ell_trace,
        slack,
    })
}

/// Eigenvalues of the Hermitian part of the PSD block.
fn block_eigenvalues(vi: &PhaseMatrix, s: &PhaseMatrix, ell: &PhaseMatrix) -> Vec<f64> {
    let n = vi.dim();
    let to_na = |z: crate::phase::C64| Complex::new(z.re, z.im);
    let sh = s.adjoint();
    let block = DMatrix::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
        (true, true) => to_na(vi.at(r, c)),
        (true, false) => to_na(s.at(r, c - n)),
        (false, true) => to_na(sh.at(r - n, c)),
        (false, false) => to_na(ell.at(r - n, c - n)),
    });
    let herm = (&block + block.adjoint()) * Complex::new(0.5, 0.0);
    herm.symmetric_eigenvalues().iter().copied().collect()
}
