use super::{ModelTag, PowerFlowError, PowerFlowState};
use crate::network::RadialNetwork;
use crate::phase::{gamma_submatrix, PhaseMatrix, PhaseVector};

/// Gap between the lossless prediction and the loss-aware model.
#[derive(Clone, Debug)]
pub struct VoltageErrorReport {
    /// `M_ij` per line.
    pub m: Vec<PhaseMatrix>,
    /// `v̂_h − v_h` per bus.
    pub error: Vec<PhaseMatrix>,
    /// Real diagonal of `error`, p.u.².
    pub diag_error: Vec<Vec<f64>>,
}

/// Backward sweep for `M`, forward sweep for the per-bus error.
///
/// The downstream loss accumulation is carried as a per-phase vector and
/// projected onto each line's phases before `γ` is applied, which keeps the
/// identity exact on laterals with fewer phases than their parent.
pub fn voltage_error_decomposition(
    network: &RadialNetwork,
    state: &PowerFlowState,
) -> Result<VoltageErrorReport, PowerFlowError> {
    if state.model != ModelTag::Bva || !state.matches(network) {
        return Err(PowerFlowError::StateMismatch);
    }
    let n_lines = network.num_lines();
    let mut acc: Vec<PhaseVector> = network
        .lines()
        .iter()
        .map(|l| PhaseVector::zeros(l.phases))
        .collect();
    for &b in network.topo_order().iter().rev() {
        let Some(l) = network.parent_line(b) else {
            continue;
        };
        let line = network.line(l);
        let mut m = (line.z * state.ell[l]).diag();
        for &c in network.child_lines(b) {
            m += acc[c].project(line.phases);
        }
        acc[l] = m;
    }
    let m: Vec<PhaseMatrix> = (0..n_lines)
        .map(|l| gamma_submatrix(network.line(l).phases) * PhaseMatrix::from_diag(&acc[l]))
        .collect();

    let mut error: Vec<PhaseMatrix> = (0..network.num_buses())
        .map(|b| PhaseMatrix::zeros(network.phases(b)))
        .collect();
    for &b in network.topo_order() {
        let Some(l) = network.parent_line(b) else {
            continue;
        };
        let line = network.line(l);
        let (i, _) = network.ends(l);
        let zh = line.z.adjoint();
        error[b] = error[i].project(line.phases) + m[l] * zh + line.z * m[l].adjoint()
            - line.z * state.ell[l] * zh;
    }
    let diag_error = error
        .iter()
        .map(|e| e.diag().iter().map(|(_, z)| z.re).collect())
        .collect();
    Ok(VoltageErrorReport {
        m,
        error,
        diag_error,
    })
}
