use super::{GradientError, GradientTable, GradientTag, InjectionKind};
use crate::network::{NodeIdx, RadialNetwork};
use crate::phase::C64;
use crate::powerflow::{solve_nonlinear_pf_with, PfOptions};

pub const DEFAULT_FD_STEP: f64 = 1e-6;

fn perturbed(u: &[C64], h: NodeIdx, kind: InjectionKind, delta: f64) -> Vec<C64> {
    let mut out = u.to_vec();
    out[h] += match kind {
        InjectionKind::P => C64::new(delta, 0.0),
        InjectionKind::Q => C64::new(0.0, delta),
    };
    out
}

/// Central difference of the nonlinear model's squared voltages with
/// respect to one injection; returns the column over all nodes.
pub fn fd_column(
    network: &RadialNetwork,
    u: &[C64],
    h: NodeIdx,
    kind: InjectionKind,
    step: f64,
    opts: PfOptions,
) -> Result<Vec<f64>, GradientError> {
    let plus = solve_nonlinear_pf_with(network, &perturbed(u, h, kind, step), opts)?;
    let minus = solve_nonlinear_pf_with(network, &perturbed(u, h, kind, -step), opts)?;
    Ok(plus
        .v_nodes(network)
        .iter()
        .zip(minus.v_nodes(network))
        .map(|(a, b)| (a - b) / (2.0 * step))
        .collect())
}

pub fn finite_difference_gradient(
    network: &RadialNetwork,
    u: &[C64],
    observed: NodeIdx,
    actuated: NodeIdx,
    kind: InjectionKind,
    step: f64,
) -> Result<f64, GradientError> {
    Ok(fd_column(network, u, actuated, kind, step, PfOptions::tight())?[observed])
}

/// Full oracle table at `u`.
pub fn finite_difference_table(
    network: &RadialNetwork,
    u: &[C64],
    step: f64,
) -> Result<GradientTable, GradientError> {
    let mut t = GradientTable::all_nodes(network, GradientTag::FiniteDifference);
    for h in 0..network.nodes().len() {
        let p = fd_column(network, u, h, InjectionKind::P, step, PfOptions::tight())?;
        let q = fd_column(network, u, h, InjectionKind::Q, step, PfOptions::tight())?;
        for (a, (dp, dq)) in p.into_iter().zip(q).enumerate() {
            t.dv_dp[(a, h)] = dp;
            t.dv_dq[(a, h)] = dq;
        }
    }
    Ok(t)
}
