//! Sampling estimates of the contraction constants around a reference
//! saddle point `(u*, μ*)`, and the contraction factor and limiting ball
//! radius built from them.
//!
//! Suprema and infima over the `δ`-ball are replaced by max/min over
//! uniformly drawn samples, so the constants are optimistic estimates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{coupling_centralized, solve, Duals, SolveOutcome, SolverConfig, SolverError};
use crate::cluster::Clustering;
use crate::gradient::{
    fd_column, gradient_error, improved_gradients, linear_gradients, GradientMode, GradientTable,
    GradientTag, InjectionKind,
};
use crate::network::{NodeIdx, RadialNetwork};
use crate::phase::C64;
use crate::powerflow::{solve_nonlinear_pf_with, PfOptions};

/// Spectral norm of the stacked `[−I; I]` constraint map.
pub const A_NORM: f64 = std::f64::consts::SQRT_2;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSpec {
    /// Radius of the sampling ball in control space.
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
    /// Central-difference step for Jacobians.
    pub fd_step: f64,
    /// Central-difference step for the Hessian of the coupling term.
    pub hessian_step: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            delta: 1e-2,
            samples: 8,
            seed: 7,
            fd_step: 1e-6,
            hessian_step: 1e-5,
        }
    }
}

/// Inputs of the contraction factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoInputs {
    pub delta: f64,
    pub sigma: f64,
    pub nu: f64,
    pub epsilon: f64,
    pub a_norm: f64,
    pub l_v: f64,
    pub m_v: f64,
    pub big_delta: f64,
    pub e1: f64,
}

/// Contraction factor of the primal-dual map in the `ν`-weighted norm.
pub fn contraction_factor(x: &RhoInputs) -> f64 {
    let dual = 1.0 - x.nu * x.sigma * x.epsilon;
    let primal = 1.0 - x.sigma * x.big_delta;
    let base = (primal * primal).max(dual * dual);
    let cross = x.sigma
        * x.a_norm
        * x.nu.sqrt()
        * (dual * (x.m_v * x.delta + x.e1)
            + x.sigma * (x.big_delta - x.nu * x.epsilon).abs() * (x.l_v + x.e1));
    let coupling = x.nu * x.sigma * x.sigma * x.a_norm * x.a_norm * (x.l_v + x.e1).powi(2);
    (base + cross + coupling).sqrt()
}

/// Limit radius of `‖z(t) − z*‖_ν`; infinite unless the contraction factor
/// is below one.
pub fn ball_radius(x: &RhoInputs, m_mu: f64) -> f64 {
    let rho = contraction_factor(x);
    if !(rho < 1.0) {
        return f64::INFINITY;
    }
    std::f64::consts::SQRT_2 * x.sigma * m_mu * (x.a_norm * x.e1 + x.epsilon * x.nu.sqrt())
        / (1.0 - rho)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceDiagnostics {
    /// Largest entrywise gradient error over the samples.
    pub e1_estimate: f64,
    /// Largest spectral-norm gradient error over the samples.
    pub e1_spectral: f64,
    pub l_v: f64,
    pub m_v: f64,
    pub m_mu: f64,
    pub big_delta: f64,
    pub nu: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub a_norm: f64,
    pub rho: f64,
    pub ball_radius: f64,
    pub delta_probe: f64,
    pub samples: usize,
}

impl ConvergenceDiagnostics {
    pub fn rho_below_one(&self) -> bool {
        self.rho < 1.0
    }

    pub fn rho_inputs(&self) -> RhoInputs {
        RhoInputs {
            delta: self.delta_probe,
            sigma: self.sigma,
            nu: self.nu,
            epsilon: self.epsilon,
            a_norm: self.a_norm,
            l_v: self.l_v,
            m_v: self.m_v,
            big_delta: self.big_delta,
            e1: self.e1_estimate,
        }
    }

    /// `key = value` lines.
    pub fn to_report(&self) -> String {
        let rows: [(&str, String); 15] = [
            ("samples", self.samples.to_string()),
            ("delta_probe", format!("{:e}", self.delta_probe)),
            ("e1_estimate", format!("{:e}", self.e1_estimate)),
            ("e1_spectral", format!("{:e}", self.e1_spectral)),
            ("L_v", format!("{:e}", self.l_v)),
            ("M_v", format!("{:e}", self.m_v)),
            ("M_mu", format!("{:e}", self.m_mu)),
            ("Delta", format!("{:e}", self.big_delta)),
            ("nu", format!("{:e}", self.nu)),
            ("sigma", format!("{:e}", self.sigma)),
            ("epsilon", format!("{:e}", self.epsilon)),
            ("A_norm", format!("{:e}", self.a_norm)),
            ("rho", format!("{:e}", self.rho)),
            ("rho_below_one", self.rho_below_one().to_string()),
            ("ball_radius", format!("{:e}", self.ball_radius)),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Reference saddle point: the configured run with `λ = 1e−9` and ten times
/// the iteration budget.
pub fn reference_solution(
    network: &RadialNetwork,
    clustering: &Clustering,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolverError> {
    let tight = SolverConfig {
        lambda_stop: 1e-9,
        max_iters: config.max_iters * 10,
        ..config.clone()
    };
    solve(network, clustering, &tight)
}

/// Controls are `(p, q)` of each controllable node, interleaved.
fn controls(network: &RadialNetwork) -> Vec<(NodeIdx, InjectionKind)> {
    network
        .control_nodes()
        .into_iter()
        .flat_map(|k| [(k, InjectionKind::P), (k, InjectionKind::Q)])
        .collect()
}

fn shifted(u: &[C64], controls: &[(NodeIdx, InjectionKind)], tau: &DVector<f64>) -> Vec<C64> {
    let mut out = u.to_vec();
    for (c, &(k, kind)) in controls.iter().enumerate() {
        match kind {
            InjectionKind::P => out[k].re += tau[c],
            InjectionKind::Q => out[k].im += tau[c],
        }
    }
    out
}

fn fd_jacobian(
    network: &RadialNetwork,
    u: &[C64],
    controls: &[(NodeIdx, InjectionKind)],
    step: f64,
) -> Result<DMatrix<f64>, SolverError> {
    let n = network.nodes().len();
    let mut j = DMatrix::zeros(n, controls.len());
    for (c, &(k, kind)) in controls.iter().enumerate() {
        let col = fd_column(network, u, k, kind, step, PfOptions::tight())?;
        j.set_column(c, &DVector::from_vec(col));
    }
    Ok(j)
}

fn evaluated_jacobian(
    network: &RadialNetwork,
    u: &[C64],
    controls: &[(NodeIdx, InjectionKind)],
    mode: GradientMode,
) -> Result<DMatrix<f64>, SolverError> {
    let table = match mode {
        GradientMode::Linear => linear_gradients(network),
        GradientMode::Improved => {
            let pf = solve_nonlinear_pf_with(network, u, PfOptions::tight())?;
            improved_gradients(network, &pf)?
        }
    };
    Ok(DMatrix::from_fn(table.observed.len(), controls.len(), |r, c| {
        let (k, kind) = controls[c];
        table.get(kind)[(r, k)]
    }))
}

fn as_table(m: DMatrix<f64>, tag: GradientTag) -> GradientTable {
    // Control columns stored in the p block; q block left empty.
    GradientTable {
        tag,
        observed: (0..m.nrows()).collect(),
        actuated: (0..m.ncols()).collect(),
        dv_dq: DMatrix::zeros(m.nrows(), m.ncols()),
        dv_dp: m,
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Coupling term at `u` for fixed duals, as a control-space vector.
fn coupling_vector(
    network: &RadialNetwork,
    u: &[C64],
    duals: &Duals,
    controls: &[(NodeIdx, InjectionKind)],
    mode: GradientMode,
) -> Result<DVector<f64>, SolverError> {
    let pf = solve_nonlinear_pf_with(network, u, PfOptions::tight())?;
    let c = coupling_centralized(network, &pf, duals, mode)?;
    Ok(DVector::from_iterator(
        controls.len(),
        controls.iter().map(|&(k, kind)| {
            let (a, b) = c.get(k).expect("controllable node");
            match kind {
                InjectionKind::P => a,
                InjectionKind::Q => b,
            }
        }),
    ))
}

/// Symmetrized `2I + ∂(Jᵀ(μ̄ − μ̲))/∂u` at `u`.
fn lagrangian_hessian(
    network: &RadialNetwork,
    u: &[C64],
    duals: &Duals,
    controls: &[(NodeIdx, InjectionKind)],
    mode: GradientMode,
    step: f64,
) -> Result<DMatrix<f64>, SolverError> {
    let n = controls.len();
    let mut h = DMatrix::identity(n, n) * 2.0;
    if duals.norm() == 0.0 {
        return Ok(h);
    }
    for c in 0..n {
        let mut e = DVector::zeros(n);
        e[c] = step;
        let plus = coupling_vector(network, &shifted(u, controls, &e), duals, controls, mode)?;
        let minus = coupling_vector(network, &shifted(u, controls, &(-e)), duals, controls, mode)?;
        let col = (plus - minus) / (2.0 * step);
        for r in 0..n {
            h[(r, c)] += col[r];
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, delta: f64) -> DVector<f64> {
    loop {
        let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = dir.norm();
        if norm > 0.0 {
            let radius = delta * rng.random::<f64>().powf(1.0 / dim as f64);
            return dir * (radius / norm);
        }
    }
}

/// Estimate the contraction constants around `(u*, μ*)` for the gradient
/// mode in `config`.
pub fn convergence_diagnostics(
    network: &RadialNetwork,
    u_star: &[C64],
    mu_star: &Duals,
    config: &SolverConfig,
    probe: ProbeSpec,
) -> Result<ConvergenceDiagnostics, SolverError> {
    if probe.samples < 2 {
        return Err(SolverError::InsufficientSamples(probe.samples));
    }
    let controls = controls(network);
    let dim = controls.len();
    let mode = config.gradient_mode;
    let v_star = DVector::from_vec(solve_nonlinear_pf_with(network, u_star, PfOptions::tight())?.v_nodes(network));
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);

    let mut l_v: f64 = 0.0;
    let mut m_v: f64 = 0.0;
    let mut e1: f64 = 0.0;
    let mut e1_spectral: f64 = 0.0;
    let mut big_delta = f64::INFINITY;
    for _ in 0..probe.samples {
        let tau = sample_ball(&mut rng, dim, probe.delta);
        let u = shifted(u_star, &controls, &tau);
        let j = fd_jacobian(network, &u, &controls, probe.fd_step)?;
        l_v = l_v.max(spectral_norm(&j));

        let v = DVector::from_vec(solve_nonlinear_pf_with(network, &u, PfOptions::tight())?.v_nodes(network));
        let tn = tau.norm();
        if tn > 0.0 {
            m_v = m_v.max((&v - &v_star - &j * &tau).norm() / (tn * tn));
        }

        let jt = evaluated_jacobian(network, &u, &controls, mode)?;
        e1_spectral = e1_spectral.max(spectral_norm(&(&jt - &j)));
        let err = gradient_error(
            &as_table(jt, GradientTag::from(mode)),
            &as_table(j, GradientTag::FiniteDifference),
        )?;
        e1 = e1.max(err.max_abs);

        let mut avg = DMatrix::zeros(dim, dim);
        for (theta, w) in GAUSS3 {
            let point = shifted(u_star, &controls, &(&tau * theta));
            avg += lagrangian_hessian(network, &point, mu_star, &controls, mode, probe.hessian_step)? * w;
        }
        let lam = avg.symmetric_eigenvalues().min();
        big_delta = big_delta.min(lam);
    }

    let inputs = RhoInputs {
        delta: probe.delta,
        sigma: config.sigma_u,
        nu: config.nu(),
        epsilon: config.epsilon,
        a_norm: A_NORM,
        l_v,
        m_v,
        big_delta,
        e1,
    };
    let m_mu = mu_star.norm();
    Ok(ConvergenceDiagnostics {
        e1_estimate: e1,
        e1_spectral,
        l_v,
        m_v,
        m_mu,
        big_delta,
        nu: inputs.nu,
        sigma: inputs.sigma,
        epsilon: inputs.epsilon,
        a_norm: A_NORM,
        rho: contraction_factor(&inputs),
        ball_radius: ball_radius(&inputs, m_mu),
        delta_probe: probe.delta,
        samples: probe.samples,
    })
}
