use super::{bus_injection, check_injections, slack_v, ModelTag, PowerFlowError, PowerFlowState};
use crate::network::RadialNetwork;
use crate::phase::{gamma_submatrix, PhaseMatrix, PhaseVector, C64};

/// Lossless linearized model: one backward pass for `Λ̂`, one forward pass
/// for `v̂`.
pub fn solve_linear_pf(network: &RadialNetwork, u: &[C64]) -> Result<PowerFlowState, PowerFlowError> {
    check_injections(network, u)?;
    let lambda = accumulate_lambda(network, u, |_| None);
    let s: Vec<PhaseMatrix> = network
        .lines()
        .iter()
        .zip(&lambda)
        .map(|(line, lam)| gamma_submatrix(line.phases) * PhaseMatrix::from_diag(lam))
        .collect();
    let ell: Vec<PhaseMatrix> = network
        .lines()
        .iter()
        .map(|l| PhaseMatrix::zeros(l.phases))
        .collect();
    let v = forward_v(network, &s, &ell);
    Ok(PowerFlowState {
        model: ModelTag::Linear,
        v,
        s,
        ell,
        lambda,
        u: u.to_vec(),
        voltages: None,
        currents: None,
        sweeps: 1,
    })
}

/// `Λ_ij = Σ_k Λ_jk − s_j (+ extra_ij)` swept from the leaves.
pub(crate) fn accumulate_lambda(
    network: &RadialNetwork,
    u: &[C64],
    extra: impl Fn(usize) -> Option<PhaseVector>,
) -> Vec<PhaseVector> {
    let mut lambda: Vec<PhaseVector> = network
        .lines()
        .iter()
        .map(|l| PhaseVector::zeros(l.phases))
        .collect();
    for &b in network.topo_order().iter().rev() {
        let Some(l) = network.parent_line(b) else {
            continue;
        };
        let phases = network.line(l).phases;
        let s = bus_injection(network, u, b);
        let mut lam = PhaseVector::from_fn(phases, |p| -s.get(p));
        for &c in network.child_lines(b) {
            lam += lambda[c].project(phases);
        }
        if let Some(x) = extra(l) {
            lam += x;
        }
        lambda[l] = lam;
    }
    lambda
}

/// `v_j = v_i^{Φ_ij} − (S z^H + z S^H) + z ℓ z^H` swept from the root.
pub(crate) fn forward_v(
    network: &RadialNetwork,
    s: &[PhaseMatrix],
    ell: &[PhaseMatrix],
) -> Vec<PhaseMatrix> {
    let mut v: Vec<PhaseMatrix> = (0..network.num_buses())
        .map(|b| PhaseMatrix::zeros(network.phases(b)))
        .collect();
    v[network.slack_idx()] = slack_v(network);
    for &b in network.topo_order() {
        let Some(l) = network.parent_line(b) else {
            continue;
        };
        let line = network.line(l);
        let (i, _) = network.ends(l);
        let zh = line.z.adjoint();
        v[b] = v[i].project(line.phases) - (s[l] * zh + line.z * s[l].adjoint())
            + line.z * ell[l] * zh;
    }
    v
}
