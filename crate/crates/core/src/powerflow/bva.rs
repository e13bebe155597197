use super::linear::{accumulate_lambda, forward_v};
use super::{check_injections, ModelTag, PfOptions, PowerFlowError, PowerFlowState};
use crate::network::RadialNetwork;
use crate::phase::{gamma_submatrix, PhaseMatrix, PhaseVector, C64};

/// Which voltage normalizes `ℓ^{ψη}` in the rank-one closure
/// `v_i^{φφ} ℓ^{ψη} = S^{φη} S̄^{φψ}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EllClosure {
    /// `√(v^{ψψ} v^{ηη})`: Hermitian and rank one, same diagonal as `RowPhase`.
    #[default]
    GeometricMean,
    /// `v^{ψψ}` (reference phase bound to the row index). Not Hermitian
    /// off the diagonal when phase voltages differ.
    RowPhase,
}

pub fn solve_bva_pf(network: &RadialNetwork, u: &[C64]) -> Result<PowerFlowState, PowerFlowError> {
    solve_bva_pf_with(network, u, PfOptions::default(), EllClosure::default())
}

/// Fixed point of the loss-aware balanced-voltage model: `Λ` from the
/// backward sweep with `diag(zℓ)`, `S = γ Diag(Λ)`, the full voltage
/// equation forward, then `ℓ` from the rank-one closure.
pub fn solve_bva_pf_with(
    network: &RadialNetwork,
    u: &[C64],
    opts: PfOptions,
    closure: EllClosure,
) -> Result<PowerFlowState, PowerFlowError> {
    check_injections(network, u)?;
    let gammas: Vec<PhaseMatrix> = network
        .lines()
        .iter()
        .map(|l| gamma_submatrix(l.phases))
        .collect();
    let mut ell: Vec<PhaseMatrix> = network
        .lines()
        .iter()
        .map(|l| PhaseMatrix::zeros(l.phases))
        .collect();
    let mut prev_diag: Option<Vec<PhaseVector>> = None;
    let mut sweeps = 0;
    loop {
        let losses: Vec<PhaseVector> = network
            .lines()
            .iter()
            .zip(&ell)
            .map(|(line, l)| (line.z * *l).diag())
            .collect();
        let lambda = accumulate_lambda(network, u, |l| Some(losses[l]));
        let s: Vec<PhaseMatrix> = gammas
            .iter()
            .zip(&lambda)
            .map(|(g, lam)| *g * PhaseMatrix::from_diag(lam))
            .collect();
        let v = forward_v(network, &s, &ell);
        sweeps += 1;

        let diag: Vec<PhaseVector> = v.iter().map(|m| m.diag()).collect();
        let change = prev_diag.as_ref().map_or(f64::INFINITY, |p| {
            p.iter()
                .zip(&diag)
                .map(|(a, b)| (*a - *b).max_abs())
                .fold(0.0, f64::max)
        });
        if diag.iter().any(|d| d.iter().any(|(_, z)| !z.is_finite())) {
            return Err(PowerFlowError::Diverged {
                sweeps,
                last_change: f64::INFINITY,
            });
        }
        if change < opts.tol {
            // Report the ℓ that produced (Λ, S, v) so both model equations
            // hold to rounding.
            return Ok(PowerFlowState {
                model: ModelTag::Bva,
                v,
                s,
                ell,
                lambda,
                u: u.to_vec(),
                voltages: None,
                currents: None,
                sweeps,
            });
        }
        if sweeps >= opts.max_sweeps {
            return Err(PowerFlowError::Diverged {
                sweeps,
                last_change: change,
            });
        }
        for (l, line) in network.lines().iter().enumerate() {
            let (i, _) = network.ends(l);
            ell[l] = closure_ell(&v[i].project(line.phases), &lambda[l], &gammas[l], closure);
        }
        prev_diag = Some(diag);
    }
}

fn closure_ell(vi: &PhaseMatrix, lambda: &PhaseVector, gamma: &PhaseMatrix, closure: EllClosure) -> PhaseMatrix {
    PhaseMatrix::from_fn(lambda.phases(), |psi, eta| {
        let den = match closure {
            EllClosure::GeometricMean => (vi.get(psi, psi).re * vi.get(eta, eta).re).sqrt(),
            EllClosure::RowPhase => vi.get(psi, psi).re,
        };
        gamma.get(psi, eta) * lambda.get(psi).conj() * lambda.get(eta) / den
    })
}
