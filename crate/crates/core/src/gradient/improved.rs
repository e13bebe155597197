use super::{
    GradientError, GradientTable, GradientTag, InjectionKind, PathSums, MIN_SQUARED_VOLTAGE,
    REALNESS_TOL,
};
use crate::network::{BusIdx, LineIdx, RadialNetwork};
use crate::phase::{rotation, Phase, PhaseMatrix, C64};
use crate::powerflow::PowerFlowState;

/// Per-bus factors of a sensitivity row. For observed bus `j` with parent
/// `i`, every entry has the form
/// `w^φ · R_{ih}^{φϕ} + 1(j ∈ P_h) · c^{φϕ}` (and likewise with `X`),
/// so the state enters only through `j`'s parent line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTerms {
    pub bus: BusIdx,
    pub parent: BusIdx,
    /// Weight on the upstream path sum, indexed by observed phase.
    pub w: [f64; 3],
    /// On-path correction for `p`, indexed `[observed][actuated]`.
    pub cp: [[f64; 3]; 3],
    pub cq: [[f64; 3]; 3],
}

impl LocalTerms {
    /// Lossless factors: `w = 1`, corrections are the line's own `R`/`X`
    /// contribution.
    pub fn lossless(network: &RadialNetwork, j: BusIdx) -> Self {
        let l = network.parent_line(j).expect("non-slack bus");
        let (i, _) = network.ends(l);
        let line = network.line(l);
        let mut t = LocalTerms {
            bus: j,
            parent: i,
            w: [1.0; 3],
            cp: [[0.0; 3]; 3],
            cq: [[0.0; 3]; 3],
        };
        for (phi, varphi, z) in line.z.entries() {
            let a = z.conj() * rotation(phi, varphi);
            t.cp[phi.index()][varphi.index()] = 2.0 * a.re;
            t.cq[phi.index()][varphi.index()] = -2.0 * a.im;
        }
        t
    }

    pub fn entry(&self, kind: InjectionKind, phi: Phase, varphi: Phase, upstream: f64, on_path: bool) -> f64 {
        let c = match kind {
            InjectionKind::P => self.cp[phi.index()][varphi.index()],
            InjectionKind::Q => self.cq[phi.index()][varphi.index()],
        };
        let base = self.w[phi.index()] * upstream;
        if on_path {
            base + c
        } else {
            base
        }
    }
}

fn parent_v(network: &RadialNetwork, state: &PowerFlowState, i: BusIdx, phi: Phase) -> Result<f64, GradientError> {
    let v = state.v[i].get(phi, phi).re;
    if !(v >= MIN_SQUARED_VOLTAGE) {
        return Err(GradientError::NumericalDegeneracy {
            bus: network.bus(i).id,
            value: v,
        });
    }
    Ok(v)
}

/// Row-`φ` quadratic form `Σ_ψ Σ_η ℓ^{ψη} z^{φψ} z̄^{φη}`.
fn loss_form(state: &PowerFlowState, network: &RadialNetwork, l: LineIdx, phi: Phase) -> C64 {
    let line = network.line(l);
    let ell = &state.ell[l];
    let mut acc = C64::new(0.0, 0.0);
    for psi in line.phases.iter() {
        for eta in line.phases.iter() {
            acc += ell.get(psi, eta) * line.z.get(phi, psi) * line.z.get(phi, eta).conj();
        }
    }
    acc
}

/// `Σ_ψ α^{φ−ϕ} S̄^{φψ} z^{φψ} z̄^{φϕ}`.
fn flow_form(state: &PowerFlowState, network: &RadialNetwork, l: LineIdx, phi: Phase, varphi: Phase) -> C64 {
    let line = network.line(l);
    let s = &state.s[l];
    let mut acc = C64::new(0.0, 0.0);
    for psi in line.phases.iter() {
        acc += s.get(phi, psi).conj() * line.z.get(phi, psi);
    }
    acc * line.z.get(phi, varphi).conj() * rotation(phi, varphi)
}

/// Loss-aware factors at an operating point.
pub fn local_terms(
    network: &RadialNetwork,
    state: &PowerFlowState,
    j: BusIdx,
) -> Result<LocalTerms, GradientError> {
    let l = network.parent_line(j).expect("non-slack bus");
    let (i, _) = network.ends(l);
    let line = network.line(l);
    let mut v_parent = [0.0; 3];
    for phi in line.phases.iter() {
        v_parent[phi.index()] = parent_v(network, state, i, phi)?;
    }
    let base = LocalTerms::lossless(network, j);
    base.with_losses(&line.z, v_parent, &state.ell[l], &state.s[l])
}

impl LocalTerms {
    /// Add the loss corrections from the parent line's state: squared
    /// voltages at the sending end, `ℓ_ij` and `S_ij`.
    pub fn with_losses(
        mut self,
        z: &PhaseMatrix,
        v_parent: [f64; 3],
        ell: &PhaseMatrix,
        s: &PhaseMatrix,
    ) -> Result<LocalTerms, GradientError> {
        let phases = z.phases();
        for phi in phases.iter() {
            let v = v_parent[phi.index()];
            if !(v >= MIN_SQUARED_VOLTAGE) {
                return Err(GradientError::NumericalDegeneracy {
                    bus: self.parent,
                    value: v,
                });
            }
            let mut q = C64::new(0.0, 0.0);
            let mut sz = C64::new(0.0, 0.0);
            for psi in phases.iter() {
                sz += s.get(phi, psi).conj() * z.get(phi, psi);
                for eta in phases.iter() {
                    q += ell.get(psi, eta) * z.get(phi, psi) * z.get(phi, eta).conj();
                }
            }
            if q.im.abs() > REALNESS_TOL {
                return Err(GradientError::ImaginaryResidue { residue: q.im.abs() });
            }
            self.w[phi.index()] = 1.0 - q.re / v;
            for varphi in phases.iter() {
                let f = sz * z.get(phi, varphi).conj() * rotation(phi, varphi);
                self.cp[phi.index()][varphi.index()] -= 2.0 * f.re / v;
                self.cq[phi.index()][varphi.index()] += 2.0 * f.im / v;
            }
        }
        Ok(self)
    }
}

fn check_state(network: &RadialNetwork, state: &PowerFlowState) -> Result<(), GradientError> {
    if state.v.len() != network.num_buses()
        || state.s.len() != network.num_lines()
        || (0..network.num_buses()).any(|b| state.v[b].phases() != network.phases(b))
    {
        return Err(GradientError::StateMismatch);
    }
    Ok(())
}

/// Improved sensitivities for every (observed, actuated) node pair.
pub fn improved_gradients(
    network: &RadialNetwork,
    state: &PowerFlowState,
) -> Result<GradientTable, GradientError> {
    check_state(network, state)?;
    let sums = PathSums::new(network);
    let mut table = GradientTable::all_nodes(network, GradientTag::Improved);
    let nodes = network.nodes();
    let mut terms: Vec<Option<LocalTerms>> = vec![None; network.num_buses()];
    for (a, oj) in nodes.iter().enumerate() {
        let t = match terms[oj.bus] {
            Some(t) => t,
            None => {
                let t = local_terms(network, state, oj.bus)?;
                terms[oj.bus] = Some(t);
                t
            }
        };
        for (c, oh) in nodes.iter().enumerate() {
            let lca = network
                .lowest_common_ancestor(t.parent, oh.bus)
                .expect("valid buses");
            let on_path = network.on_path(oj.bus, oh.bus);
            table.dv_dp[(a, c)] = t.entry(
                InjectionKind::P,
                oj.phase,
                oh.phase,
                sums.r_path(lca, oj.phase, oh.phase),
                on_path,
            );
            table.dv_dq[(a, c)] = t.entry(
                InjectionKind::Q,
                oj.phase,
                oh.phase,
                sums.x_path(lca, oj.phase, oh.phase),
                on_path,
            );
        }
    }
    Ok(table)
}

fn upstream(sums: &PathSums, network: &RadialNetwork, kind: InjectionKind, i: BusIdx, h: BusIdx, phi: Phase, varphi: Phase) -> f64 {
    match kind {
        InjectionKind::P => sums.r(network, i, h, phi, varphi),
        InjectionKind::Q => sums.x(network, i, h, phi, varphi),
    }
}

/// Lossless `∂Λ̂^ϕ/∂u_h^ϕ` on a line whose downstream bus is on `P_h`.
fn dlambda(kind: InjectionKind) -> C64 {
    match kind {
        InjectionKind::P => C64::new(-1.0, 0.0),
        InjectionKind::Q => C64::new(0.0, -1.0),
    }
}

/// `∂ℓ̂^{ψη}/∂u_h^ϕ` on line `l` with reference phase `phi_ref`, using
/// lossless derivatives for `S` and `v_i` and operating-point values for
/// everything else.
#[allow(clippy::too_many_arguments)]
pub fn ell_derivative_hat(
    network: &RadialNetwork,
    state: &PowerFlowState,
    sums: &PathSums,
    l: LineIdx,
    psi: Phase,
    eta: Phase,
    phi_ref: Phase,
    h: BusIdx,
    varphi: Phase,
    kind: InjectionKind,
) -> Result<C64, GradientError> {
    check_state(network, state)?;
    let (i, j) = network.ends(l);
    let v = parent_v(network, state, i, phi_ref)?;
    let s = &state.s[l];
    let up = upstream(sums, network, kind, i, h, phi_ref, varphi);
    let mut bracket = state.ell[l].get(psi, eta) * up;
    if network.on_path(j, h) {
        let d = dlambda(kind) * rotation(phi_ref, varphi);
        if eta == varphi {
            bracket -= s.get(phi_ref, psi).conj() * d;
        }
        if psi == varphi {
            bracket -= s.get(phi_ref, eta) * d.conj();
        }
    }
    Ok(-bracket / v)
}

/// Improved entry assembled term by term: upstream lossless derivative,
/// the `Ŝ` terms of the voltage equation, and the `ℓ̂` terms with the
/// reference phase bound to the observed phase.
#[allow(clippy::too_many_arguments)]
pub fn improved_entry_expanded(
    network: &RadialNetwork,
    state: &PowerFlowState,
    sums: &PathSums,
    j: BusIdx,
    phi: Phase,
    h: BusIdx,
    varphi: Phase,
    kind: InjectionKind,
) -> Result<f64, GradientError> {
    let l = network.parent_line(j).expect("non-slack bus");
    let (i, _) = network.ends(l);
    let line = network.line(l);
    let mut total = C64::new(upstream(sums, network, kind, i, h, phi, varphi), 0.0);
    if network.on_path(j, h) && line.phases.contains(varphi) {
        // Only ψ = ϕ survives in Σ_ψ ∂Ŝ^{φψ} z̄^{φψ}.
        let ds = dlambda(kind) * rotation(phi, varphi);
        let z = line.z.get(phi, varphi);
        total -= ds * z.conj() + z * ds.conj();
    }
    for psi in line.phases.iter() {
        for eta in line.phases.iter() {
            let dl = ell_derivative_hat(network, state, sums, l, psi, eta, phi, h, varphi, kind)?;
            total += line.z.get(phi, psi) * dl * line.z.get(phi, eta).conj();
        }
    }
    if total.im.abs() > REALNESS_TOL {
        return Err(GradientError::ImaginaryResidue {
            residue: total.im.abs(),
        });
    }
    Ok(total.re)
}

/// Improved entry written as the lossless `R_jh` (or `X_jh`) minus loss
/// corrections.
#[allow(clippy::too_many_arguments)]
pub fn improved_entry_rewrite(
    network: &RadialNetwork,
    state: &PowerFlowState,
    sums: &PathSums,
    j: BusIdx,
    phi: Phase,
    h: BusIdx,
    varphi: Phase,
    kind: InjectionKind,
) -> Result<f64, GradientError> {
    let l = network.parent_line(j).expect("non-slack bus");
    let (i, _) = network.ends(l);
    let v = parent_v(network, state, i, phi)?;
    let full = upstream(sums, network, kind, j, h, phi, varphi);
    let up = upstream(sums, network, kind, i, h, phi, varphi);
    let q = loss_form(state, network, l, phi).re;
    let mut out = full - up * q / v;
    if network.on_path(j, h) && network.line(l).phases.contains(varphi) {
        let f = flow_form(state, network, l, phi, varphi);
        out += match kind {
            InjectionKind::P => -2.0 * f.re / v,
            InjectionKind::Q => 2.0 * f.im / v,
        };
    }
    Ok(out)
}
