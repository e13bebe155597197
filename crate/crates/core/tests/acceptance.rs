//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails.

mod common;

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use hopf_core::gradient::{
    finite_difference_table, gradient_error, improved_gradients, linear_gradients, GradientMode,
};
use hopf_core::network::RadialNetwork;
use hopf_core::phase::C64;
use hopf_core::powerflow::{
    pf_residuals, solve_bva_pf, solve_linear_pf, solve_nonlinear_pf, solve_nonlinear_pf_with,
    voltage_error_decomposition, PfOptions,
};
use hopf_core::solver::{
    contraction_factor, convergence_diagnostics, initial_state, reference_solution, run_iteration,
    solve_observed, CouplingEngine, Duals, ExecutionMode, ProbeSpec, RhoInputs, SolveOutcome,
    SolverConfig, SolverState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

thread_local! {
    static CHECKED: Cell<usize> = const { Cell::new(0) };
    static BROKEN: Cell<usize> = const { Cell::new(0) };
}

fn check_invariants(net: &RadialNetwork, s: &SolverState) {
    let duals_ok = s.duals.lower.iter().chain(&s.duals.upper).all(|m| *m >= 0.0);
    let boxed = s.u.iter().enumerate().all(|(k, u)| net.node_box(k).contains(*u, 1e-12));
    CHECKED.with(|c| c.set(c.get() + 1));
    if !(duals_ok && boxed) {
        BROKEN.with(|c| c.set(c.get() + 1));
    }
}

fn observed_solve(net: &RadialNetwork, name: &str, cfg: &SolverConfig) -> SolveOutcome {
    let f = common::feeder(name);
    let init = initial_state(net, cfg).expect("initial state");
    solve_observed(net, &f.clustering, cfg, init, |s, _| check_invariants(net, s)).expect("solve")
}

fn tuned(mode: GradientMode, execution: ExecutionMode) -> (RadialNetwork, SolverConfig) {
    let (f, net) = common::loaded("feeder25.json");
    let cfg = SolverConfig {
        gradient_mode: mode,
        execution,
        lambda_stop: 1e-6,
        max_iters: 2000,
        ..common::tuned_config(&f)
    };
    (net, cfg)
}

fn ac1() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for name in common::FIXTURES {
        let (_, net) = common::loaded(name);
        let st = solve_nonlinear_pf(&net, &net.nominal_injections()).map_err(|e| e.to_string())?;
        let res = pf_residuals(&net, &st).map_err(|e| e.to_string())?;
        let r = res.max_voltage().max(res.max_balance());
        let d = res.max_relative_rank1_defect();
        ensure(r < 1e-8, || format!("{name}: residual {r:e}"))?;
        ensure(d < 1e-8, || format!("{name}: rank-1 defect {d:e}"))?;
        worst = (worst.0.max(r), worst.1.max(d));
    }
    let net = common::feeder("two_bus.json").network;
    let (r, x, p, q) = (0.01, 0.02, 0.1, 0.05);
    let b = 1.05f64 * 1.05 - 2.0 * (r * p + x * q);
    let c = (r * r + x * x) * (p * p + q * q);
    let v1 = 0.5 * (b + (b * b - 4.0 * c).sqrt());
    let st = solve_nonlinear_pf_with(&net, &net.nominal_injections(), PfOptions::tight())
        .map_err(|e| e.to_string())?;
    let gap = (st.v_node(&net, 0) - v1).abs();
    ensure(gap < 1e-10, || format!("two-bus closed form off by {gap:e}"))?;
    Ok(format!(
        "residual {:.1e}, rank-1 defect {:.1e}, two-bus gap {gap:.1e}",
        worst.0, worst.1
    ))
}

fn ac2() -> Outcome {
    let mut worst: f64 = 0.0;
    for name in common::FIXTURES {
        let (_, net) = common::loaded(name);
        let u = net.nominal_injections();
        let lin = solve_linear_pf(&net, &u).map_err(|e| e.to_string())?;
        let bva = solve_bva_pf(&net, &u).map_err(|e| e.to_string())?;
        let rep = voltage_error_decomposition(&net, &bva).map_err(|e| e.to_string())?;
        let gap = rep
            .error
            .iter()
            .zip(lin.v.iter().zip(&bva.v))
            .map(|(e, (a, b))| (*e - (*a - *b)).max_abs())
            .fold(0.0, f64::max);
        ensure(gap < 1e-10, || format!("{name}: gap {gap:e}"))?;
        worst = worst.max(gap);
    }
    Ok(format!("max entrywise gap {worst:.1e}"))
}

fn ac3() -> Outcome {
    for name in common::FIXTURES {
        let net = common::feeder(name).network;
        let zero = vec![C64::new(0.0, 0.0); net.nodes().len()];
        let st = solve_nonlinear_pf(&net, &zero).map_err(|e| e.to_string())?;
        let imp = improved_gradients(&net, &st).map_err(|e| e.to_string())?;
        let lin = linear_gradients(&net);
        ensure(imp.dv_dp == lin.dv_dp && imp.dv_dq == lin.dv_dq, || {
            format!("(a) {name}: improved differs from linear at zero flow")
        })?;
    }
    let (_, net) = common::loaded("feeder25.json");
    let u = net.nominal_injections();
    let st = solve_nonlinear_pf(&net, &u).map_err(|e| e.to_string())?;
    let fd = finite_difference_table(&net, &u, 1e-6).map_err(|e| e.to_string())?;
    let e_imp = gradient_error(&improved_gradients(&net, &st).map_err(|e| e.to_string())?, &fd)
        .map_err(|e| e.to_string())?
        .frobenius;
    let e_lin = gradient_error(&linear_gradients(&net), &fd).map_err(|e| e.to_string())?.frobenius;
    let detail = format!("(a) exact; (b) Frobenius improved {e_imp:.4e} vs linear {e_lin:.4e}");
    ensure(e_imp < e_lin, || format!("{detail}: improved is not closer to the oracle"))?;
    Ok(detail)
}

fn random_state(net: &RadialNetwork, cfg: &SolverConfig, rng: &mut ChaCha8Rng) -> Result<SolverState, String> {
    let mut s = initial_state(net, cfg).map_err(|e| e.to_string())?;
    for k in net.control_nodes() {
        let b = net.node_box(k);
        s.u[k] = C64::new(
            b.p_min + rng.random::<f64>() * (b.p_max - b.p_min),
            b.q_min + rng.random::<f64>() * (b.q_max - b.q_min),
        );
    }
    s.pf = solve_nonlinear_pf_with(net, &s.u, cfg.pf).map_err(|e| e.to_string())?;
    let n = net.nodes().len();
    s.duals = Duals::zeros(n);
    for k in 0..n {
        match rng.random_range(0..3) {
            0 => s.duals.lower[k] = rng.random::<f64>() * 5.0,
            1 => s.duals.upper[k] = rng.random::<f64>() * 5.0,
            _ => {}
        }
    }
    Ok(s)
}

fn ac4() -> Outcome {
    let f = common::feeder("feeder25.json");
    let mut worst: f64 = 0.0;
    let draws = 120;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for mode in [GradientMode::Improved, GradientMode::Linear] {
        let (net, ccfg) = tuned(mode, ExecutionMode::Centralized);
        let hcfg = SolverConfig {
            execution: ExecutionMode::Hierarchical,
            ..ccfg.clone()
        };
        let central = CouplingEngine::new(&net, &f.clustering, &ccfg).map_err(|e| e.to_string())?;
        let hier = CouplingEngine::new(&net, &f.clustering, &hcfg).map_err(|e| e.to_string())?;
        for draw in 0..draws {
            let base = random_state(&net, &ccfg, &mut rng)?;
            let mut sc = base.clone();
            sc.coupling = central.compute(&net, &base.pf, &base.duals, &ccfg).map_err(|e| e.to_string())?.0;
            let mut sh = base;
            sh.coupling = hier.compute(&net, &sh.pf, &sh.duals, &hcfg).map_err(|e| e.to_string())?.0;
            let (a, _) = run_iteration(&net, &central, &sc, &ccfg).map_err(|e| e.to_string())?;
            let (b, _) = run_iteration(&net, &hier, &sh, &hcfg).map_err(|e| e.to_string())?;
            check_invariants(&net, &a);
            check_invariants(&net, &b);
            let du = a.u.iter().zip(&b.u).map(|(x, y)| (x - y).re.abs().max((x - y).im.abs()));
            let dm = a
                .duals
                .lower
                .iter()
                .zip(&b.duals.lower)
                .chain(a.duals.upper.iter().zip(&b.duals.upper))
                .map(|(x, y)| (x - y).abs());
            let gap = du.chain(dm).fold(0.0, f64::max);
            ensure(gap <= 1e-12, || format!("{mode:?} draw {draw}: gap {gap:e}"))?;
            worst = worst.max(gap);
        }
    }
    Ok(format!("{draws} draws per gradient mode, max coordinate gap {worst:.1e}"))
}

fn ac5() -> Outcome {
    let (net, cfg) = tuned(GradientMode::Improved, ExecutionMode::Centralized);
    let slack = net.slack_voltage();
    ensure(slack.iter().all(|(_, v)| (v.norm() - 1.05).abs() < 1e-12), || {
        "slack is not at 1.05 p.u.".into()
    })?;
    ensure(
        (cfg.v_lower - 0.95f64.powi(2)).abs() < 1e-15 && (cfg.v_upper - 1.05f64.powi(2)).abs() < 1e-15,
        || "bounds are not [0.95², 1.05²]".into(),
    )?;
    let imp = observed_solve(&net, "feeder25.json", &cfg);
    let (net_l, cfg_l) = tuned(GradientMode::Linear, ExecutionMode::Centralized);
    let lin = observed_solve(&net_l, "feeder25.json", &cfg_l);
    let min_mag = |o: &SolveOutcome, net: &RadialNetwork| {
        o.state.pf.v_nodes(net).iter().map(|v| v.sqrt()).fold(f64::INFINITY, f64::min)
    };
    let (mi, ml) = (min_mag(&imp, &net), min_mag(&lin, &net_l));
    let below = lin
        .state
        .pf
        .v_nodes(&net_l)
        .iter()
        .filter(|v| v.sqrt() < 0.95)
        .count();
    let detail = format!(
        "improved {} iters min {mi:.6} p.u.; linear {} iters min {ml:.6} p.u., {below} below 0.95",
        imp.trace.records.len(),
        lin.trace.records.len()
    );
    ensure(imp.converged(), || format!("{detail}: improved did not converge ({:?})", imp.status))?;
    ensure(mi >= 0.95 - 1e-3, || format!("{detail}: improved leaves nodes low"))?;
    ensure(lin.converged(), || format!("{detail}: linear did not converge ({:?})", lin.status))?;
    ensure(below >= 1, || format!("{detail}: linear lifted every node"))?;
    Ok(detail)
}

fn ac6() -> Outcome {
    let f = common::feeder("feeder25.json");
    let k = f.clustering.subtrees.len();
    ensure(k == 3, || format!("expected 3 subtrees, found {k}"))?;
    let (net, cfg) = tuned(GradientMode::Improved, ExecutionMode::Hierarchical);
    let phases0 = net.network_phases().len();
    let run = |skip: bool| {
        let cfg = SolverConfig {
            skip_zero_duals: skip,
            ..cfg.clone()
        };
        let init = initial_state(&net, &cfg).expect("initial state");
        let mut traj: Vec<(Vec<C64>, Duals)> = Vec::new();
        let out = solve_observed(&net, &f.clustering, &cfg, init, |s, _| {
            check_invariants(&net, s);
            traj.push((s.u.clone(), s.duals.clone()));
        })
        .expect("solve");
        (traj, out)
    };
    let (with_skip, out_skip) = run(true);
    let (without, out_full) = run(false);
    for (t, m) in out_skip.ledger.iterations.iter().enumerate() {
        ensure(m.rc_to_cc.messages == k && m.rc_to_cc.scalars == k * phases0, || {
            format!("iteration {}: RC->CC {:?}", t + 1, m.rc_to_cc)
        })?;
        ensure(m.cc_to_rc.messages == k, || format!("iteration {}: CC->RC {:?}", t + 1, m.cc_to_rc))?;
    }
    ensure(with_skip.len() == without.len(), || {
        format!("trajectory lengths differ: {} vs {}", with_skip.len(), without.len())
    })?;
    let same = with_skip
        .iter()
        .zip(&without)
        .all(|((ua, da), (ub, db))| ua == ub && da == db);
    ensure(same, || "skip changes the trajectory".into())?;
    Ok(format!(
        "{} iterations, K = {k}, |Phi0| = {phases0}; messages {} with skip vs {} without",
        with_skip.len(),
        out_skip.ledger.total_messages(),
        out_full.ledger.total_messages()
    ))
}

fn ac7() -> Outcome {
    let f = common::feeder("feeder25.json");
    let (net, cfg) = tuned(GradientMode::Improved, ExecutionMode::Centralized);
    let star = reference_solution(&net, &f.clustering, &cfg).map_err(|e| e.to_string())?;
    let d = convergence_diagnostics(&net, &star.state.u, &star.state.duals, &cfg, ProbeSpec::default())
        .map_err(|e| e.to_string())?;
    let detail = format!("rho {:.5}, ball radius {:.4e}, e1 {:.3e}", d.rho, d.ball_radius, d.e1_estimate);
    ensure(d.rho_below_one(), || format!("{detail}: rho >= 1"))?;
    ensure(d.ball_radius > 0.0 && d.ball_radius.is_finite(), || format!("{detail}: bad radius"))?;
    let base = d.rho_inputs();
    let mut last = f64::NEG_INFINITY;
    for i in 0..=200 {
        let x = RhoInputs {
            e1: 2.0 * d.e1_estimate * i as f64 / 200.0,
            ..base
        };
        let rho = contraction_factor(&x);
        ensure(rho >= last, || format!("{detail}: rho decreases at e1 = {:e}", x.e1))?;
        last = rho;
    }
    Ok(detail)
}

fn ac8() -> Outcome {
    let checked = CHECKED.with(Cell::get);
    let broken = BROKEN.with(Cell::get);
    ensure(checked > 0, || "no iterations were checked".into())?;
    ensure(broken == 0, || format!("{broken} of {checked} iterates broke an invariant"))?;
    Ok(format!("{checked} iterates checked"))
}

fn main() {
    let criteria: [(&str, &str, Duration, fn() -> Outcome); 8] = [
        ("AC1", "power-flow correctness", Duration::from_secs(1), ac1),
        ("AC2", "voltage-error decomposition exactness", Duration::from_secs(1), ac2),
        ("AC3", "gradient identity and superiority", Duration::from_secs(30), ac3),
        ("AC4", "hierarchical equals centralized", Duration::from_secs(10), ac4),
        ("AC5", "voltage-safety outcome", Duration::from_secs(60), ac5),
        ("AC6", "protocol accounting", Duration::from_secs(5), ac6),
        ("AC7", "convergence diagnostics", Duration::from_secs(60), ac7),
        ("AC8", "dual and projection invariants", Duration::MAX, ac8),
    ];
    let mut failed = 0;
    for (id, title, budget, run) in criteria {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = started.elapsed();
        let result = match result {
            Ok(d) if took > budget => Err(format!("{d}; over the {budget:?} budget")),
            r => r,
        };
        let (verdict, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{id} {verdict} {title} [{:.2} s] {detail}", took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
