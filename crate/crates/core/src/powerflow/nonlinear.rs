use super::{
    bus_injection, check_injections, ModelTag, PfOptions, PowerFlowError, PowerFlowState,
};
use crate::network::RadialNetwork;
use crate::phase::{PhaseMatrix, PhaseVector, C64};

pub fn solve_nonlinear_pf(
    network: &RadialNetwork,
    u: &[C64],
) -> Result<PowerFlowState, PowerFlowError> {
    solve_nonlinear_pf_with(network, u, PfOptions::default())
}

/// Backward/forward sweep on complex phase voltages from a flat start.
pub fn solve_nonlinear_pf_with(
    network: &RadialNetwork,
    u: &[C64],
    opts: PfOptions,
) -> Result<PowerFlowState, PowerFlowError> {
    check_injections(network, u)?;
    let slack = network.slack_idx();
    let v0 = network.slack_voltage();
    let injections: Vec<PhaseVector> = (0..network.num_buses())
        .map(|b| bus_injection(network, u, b))
        .collect();

    let mut volt: Vec<PhaseVector> = (0..network.num_buses())
        .map(|b| v0.project(network.phases(b)))
        .collect();
    let mut cur: Vec<PhaseVector> = network
        .lines()
        .iter()
        .map(|l| PhaseVector::zeros(l.phases))
        .collect();

    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while change >= opts.tol {
        if sweeps >= opts.max_sweeps {
            return Err(PowerFlowError::Diverged {
                sweeps,
                last_change: change,
            });
        }
        backward(network, &injections, &volt, &mut cur);
        change = forward(network, &cur, &mut volt);
        sweeps += 1;
        if !change.is_finite() {
            return Err(PowerFlowError::Diverged {
                sweeps,
                last_change: change,
            });
        }
    }
    // One closing pass so the voltage equation holds to rounding for the
    // reported (V, I) pair.
    backward(network, &injections, &volt, &mut cur);
    forward(network, &cur, &mut volt);
    debug_assert_eq!(volt[slack], v0.project(network.phases(slack)));

    let v = volt.iter().map(|x| PhaseMatrix::outer(x, x)).collect();
    let mut s = Vec::with_capacity(network.num_lines());
    let mut ell = Vec::with_capacity(network.num_lines());
    let mut lambda = Vec::with_capacity(network.num_lines());
    for (l, line) in network.lines().iter().enumerate() {
        let (i, _) = network.ends(l);
        let vi = volt[i].project(line.phases);
        let sij = PhaseMatrix::outer(&vi, &cur[l]);
        lambda.push(sij.diag());
        s.push(sij);
        ell.push(PhaseMatrix::outer(&cur[l], &cur[l]));
    }

    Ok(PowerFlowState {
        model: ModelTag::Nonlinear,
        v,
        s,
        ell,
        lambda,
        u: u.to_vec(),
        voltages: Some(volt),
        currents: Some(cur),
        sweeps,
    })
}

/// Line currents from constant-power loads at the current voltages.
fn backward(
    network: &RadialNetwork,
    injections: &[PhaseVector],
    volt: &[PhaseVector],
    cur: &mut [PhaseVector],
) {
    for &b in network.topo_order().iter().rev() {
        let Some(l) = network.parent_line(b) else {
            continue;
        };
        let phases = network.line(l).phases;
        let mut i = PhaseVector::from_fn(phases, |p| {
            (-injections[b].get(p) / volt[b].get(p)).conj()
        });
        for &c in network.child_lines(b) {
            i += cur[c].project(phases);
        }
        cur[l] = i;
    }
}

/// `V_j = V_i^{Φ_ij} − z_ij I_ij`; returns the largest voltage change.
fn forward(network: &RadialNetwork, cur: &[PhaseVector], volt: &mut [PhaseVector]) -> f64 {
    let mut change: f64 = 0.0;
    for &b in network.topo_order() {
        let Some(l) = network.parent_line(b) else {
            continue;
        };
        let line = network.line(l);
        let (i, _) = network.ends(l);
        let next = volt[i].project(line.phases) - line.z.mul_vec(&cur[l]);
        if next.iter().any(|(_, z)| !z.is_finite()) {
            return f64::INFINITY;
        }
        change = change.max((next - volt[b]).max_abs());
        volt[b] = next;
    }
    change
}
