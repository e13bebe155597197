use super::{Coupling, SolverConfig, SolverError};
use crate::network::{InjectionBox, RadialNetwork};
use crate::phase::C64;

/// Lower and upper voltage multipliers, one per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Duals {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Duals {
    pub fn zeros(n: usize) -> Self {
        Duals {
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    /// `μ̄ − μ̲` per node.
    pub fn net(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }

    pub fn norm(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.upper)
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance(&self, other: &Duals) -> f64 {
        self.lower
            .iter()
            .zip(&other.lower)
            .chain(self.upper.iter().zip(&other.upper))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn project_box(s: C64, bounds: &InjectionBox) -> C64 {
    bounds.project(s)
}

/// `f(u) = Σ (p − p_nom)² + (q − q_nom)²` over controllable nodes.
pub fn objective(network: &RadialNetwork, u: &[C64]) -> f64 {
    let nominal = network.nominal_injections();
    network
        .control_nodes()
        .into_iter()
        .map(|k| (u[k] - nominal[k]).norm_sqr())
        .sum()
}

/// `(∂f/∂p, ∂f/∂q)` packed as a complex number per node.
pub fn objective_gradient(network: &RadialNetwork, u: &[C64]) -> Vec<C64> {
    let nominal = network.nominal_injections();
    u.iter()
        .zip(&nominal)
        .enumerate()
        .map(|(k, (x, n))| {
            if network.is_controllable(k) {
                (x - n) * 2.0
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// `u(t+1) = [u − σ_u(∇f + coupling)]_Y` for controllable nodes.
pub fn primal_step(
    network: &RadialNetwork,
    u: &[C64],
    coupling: &Coupling,
    sigma_u: f64,
) -> Result<Vec<C64>, SolverError> {
    let grad = objective_gradient(network, u);
    let mut next = u.to_vec();
    for k in network.control_nodes() {
        let (a, b) = coupling.get(k).ok_or_else(|| {
            let n = network.nodes()[k];
            SolverError::InternalProtocol(format!(
                "no coupling term for bus {} phase {}",
                network.bus(n.bus).id,
                n.phase
            ))
        })?;
        let raw = C64::new(u[k].re - sigma_u * (grad[k].re + a), u[k].im - sigma_u * (grad[k].im + b));
        next[k] = project_box(raw, &network.node_box(k));
    }
    Ok(next)
}

/// Projected dual ascent with regularization `ε`.
pub fn dual_step(duals: &Duals, v: &[f64], config: &SolverConfig) -> Duals {
    let s = config.sigma_mu;
    let e = config.epsilon;
    let lower = duals
        .lower
        .iter()
        .zip(v)
        .map(|(m, vj)| (m + s * (config.v_lower - vj - e * m)).max(0.0))
        .collect();
    let upper = duals
        .upper
        .iter()
        .zip(v)
        .map(|(m, vj)| (m + s * (vj - config.v_upper - e * m)).max(0.0))
        .collect();
    Duals { lower, upper }
}
