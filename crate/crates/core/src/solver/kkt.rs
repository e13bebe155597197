use super::{coupling_centralized, objective_gradient, project_box, Duals, SolverConfig, SolverError};
use crate::gradient::GradientMode;
use crate::network::RadialNetwork;
use crate::phase::C64;
use crate::powerflow::PowerFlowState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResidual {
    /// `‖u − [u − (∇f + Jᵀ(μ̄ − μ̲))]_Y‖∞` over controllable nodes.
    pub stationarity: f64,
    /// Largest squared-voltage bound violation, zero when feasible.
    pub primal_feasibility: f64,
    pub complementarity: f64,
    /// Smallest dual entry.
    pub dual_feasibility: f64,
}

/// Optimality residuals at `(u, μ)` with `pf` solved at `u`.
pub fn kkt_residual(
    network: &RadialNetwork,
    pf: &PowerFlowState,
    duals: &Duals,
    mode: GradientMode,
    config: &SolverConfig,
) -> Result<KktResidual, SolverError> {
    let u: &[C64] = &pf.u;
    let grad = objective_gradient(network, u);
    let coupling = coupling_centralized(network, pf, duals, mode)?;
    let mut stationarity: f64 = 0.0;
    for k in network.control_nodes() {
        let (a, b) = coupling.get(k).expect("controllable node has coupling");
        let step = C64::new(u[k].re - (grad[k].re + a), u[k].im - (grad[k].im + b));
        let r = u[k] - project_box(step, &network.node_box(k));
        stationarity = stationarity.max(r.re.abs()).max(r.im.abs());
    }
    let v = pf.v_nodes(network);
    let mut primal: f64 = 0.0;
    let mut comp = 0.0;
    for (k, vk) in v.iter().enumerate() {
        let below = config.v_lower - vk;
        let above = vk - config.v_upper;
        primal = primal.max(below).max(above);
        comp += duals.lower[k] * below + duals.upper[k] * above;
    }
    let dual_min = duals
        .lower
        .iter()
        .chain(&duals.upper)
        .fold(f64::INFINITY, |m, x| m.min(*x));
    Ok(KktResidual {
        stationarity,
        primal_feasibility: primal.max(0.0),
        complementarity: comp.abs(),
        dual_feasibility: dual_min,
    })
}
