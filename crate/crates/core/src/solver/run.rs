use std::time::Instant;

use super::{
    dual_step, objective, primal_step, Coupling, CouplingEngine, Duals, IterationMessages,
    MessageLedger, SolverConfig, SolverError,
};
use crate::cluster::Clustering;
use crate::network::RadialNetwork;
use crate::phase::C64;
use crate::powerflow::{solve_nonlinear_pf_with, PowerFlowState};
use crate::trace::{IterationRecord, IterationTrace, ProfileRow};

/// Slack on box membership when checking the projection invariant.
const BOX_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SolverState {
    pub iter: usize,
    pub u: Vec<C64>,
    pub duals: Duals,
    /// Nonlinear power flow at `u`.
    pub pf: PowerFlowState,
    /// Coupling term the next primal step will use.
    pub coupling: Coupling,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    Converged,
    MaxItersReached,
    /// The iteration after the returned state failed.
    Failed(SolverError),
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub state: SolverState,
    pub trace: IterationTrace,
    pub ledger: MessageLedger,
    pub status: StopReason,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.status == StopReason::Converged
    }
}

/// Projected nominal injections, zero duals, zero coupling.
pub fn initial_state(network: &RadialNetwork, config: &SolverConfig) -> Result<SolverState, SolverError> {
    let u = network.project_injections(&network.nominal_injections());
    let pf = solve_nonlinear_pf_with(network, &u, config.pf)?;
    Ok(SolverState {
        iter: 0,
        u,
        duals: Duals::zeros(network.nodes().len()),
        pf,
        coupling: Coupling::zeros_for(network),
    })
}

/// Number of nodes whose magnitude lies outside `[v_min − tol, v_max + tol]`,
/// with `v` given as squared magnitudes.
pub fn voltage_violations(v: &[f64], config: &SolverConfig, tol: f64) -> usize {
    let lo = config.v_lower.sqrt() - tol;
    let hi = config.v_upper.sqrt() + tol;
    v.iter()
        .map(|x| x.sqrt())
        .filter(|m| *m < lo || *m > hi)
        .count()
}

fn check_invariants(network: &RadialNetwork, state: &SolverState) -> Result<(), SolverError> {
    let bad_dual = state
        .duals
        .lower
        .iter()
        .chain(&state.duals.upper)
        .any(|m| !(*m >= 0.0));
    if bad_dual {
        return Err(SolverError::Invariant {
            iter: state.iter,
            what: "negative or non-finite dual".into(),
        });
    }
    for (k, s) in state.u.iter().enumerate() {
        if !network.node_box(k).contains(*s, BOX_TOL) {
            let n = network.nodes()[k];
            return Err(SolverError::Invariant {
                iter: state.iter,
                what: format!(
                    "injection at bus {} phase {} left its box",
                    network.bus(n.bus).id,
                    n.phase
                ),
            });
        }
    }
    Ok(())
}

/// One primal step, physical power flow, dual step and coupling update.
pub fn run_iteration(
    network: &RadialNetwork,
    engine: &CouplingEngine,
    state: &SolverState,
    config: &SolverConfig,
) -> Result<(SolverState, IterationMessages), SolverError> {
    let u = primal_step(network, &state.u, &state.coupling, config.sigma_u)?;
    let pf = solve_nonlinear_pf_with(network, &u, config.pf)?;
    let duals = dual_step(&state.duals, &pf.v_nodes(network), config);
    let (coupling, msgs) = engine.compute(network, &pf, &duals, config)?;
    let next = SolverState {
        iter: state.iter + 1,
        u,
        duals,
        pf,
        coupling,
    };
    check_invariants(network, &next)?;
    Ok((next, msgs))
}

fn u_distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn profile(network: &RadialNetwork, pf: &PowerFlowState) -> Vec<ProfileRow> {
    network
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, n)| ProfileRow {
            bus: network.bus(n.bus).id,
            phase: n.phase,
            vmag_pu: pf.v_node(network, k).sqrt(),
        })
        .collect()
}

/// Solve from the default initial state.
pub fn solve(
    network: &RadialNetwork,
    clustering: &Clustering,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolverError> {
    let init = initial_state(network, config)?;
    solve_observed(network, clustering, config, init, |_, _| {})
}

/// Iterate from `init` until both `‖Δu‖` and `‖Δμ‖` fall below
/// `lambda_stop` or `max_iters` is reached, calling `observer` after every
/// iteration. Failures after setup end the run with
/// [`StopReason::Failed`] and keep the last good state.
pub fn solve_observed(
    network: &RadialNetwork,
    clustering: &Clustering,
    config: &SolverConfig,
    init: SolverState,
    mut observer: impl FnMut(&SolverState, &IterationMessages),
) -> Result<SolveOutcome, SolverError> {
    config.validate()?;
    let engine = CouplingEngine::new(network, clustering, config)?;
    check_invariants(network, &init)?;
    let mut state = init;
    let mut trace = IterationTrace::default();
    let mut ledger = MessageLedger::default();
    let mut status = StopReason::MaxItersReached;
    for _ in 0..config.max_iters {
        let started = Instant::now();
        let (next, msgs) = match run_iteration(network, &engine, &state, config) {
            Ok(r) => r,
            Err(e) => {
                status = StopReason::Failed(e);
                break;
            }
        };
        let ms = started.elapsed().as_secs_f64() * 1e3;
        let du = u_distance(&next.u, &state.u);
        let dmu = next.duals.distance(&state.duals);
        let v = next.pf.v_nodes(network);
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
        trace.records.push(IterationRecord {
            iter: next.iter,
            objective: objective(network, &next.u),
            min_v: lo.sqrt(),
            max_v: hi.sqrt(),
            du_norm: du,
            mu_norm: next.duals.norm(),
            violations: voltage_violations(&v, config, 0.0),
            ms,
        });
        ledger.iterations.push(msgs);
        observer(&next, &msgs);
        state = next;
        if du < config.lambda_stop && dmu < config.lambda_stop {
            status = StopReason::Converged;
            break;
        }
    }
    trace.profile = profile(network, &state.pf);
    Ok(SolveOutcome {
        state,
        trace,
        ledger,
        status,
    })
}
