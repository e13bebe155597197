//! Scenario runner behind the `hopf` binary.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use hopf_core::feeder::{parse_feeder, Feeder};
use hopf_core::gradient::GradientMode;
use hopf_core::network::RadialNetwork;
use hopf_core::powerflow::solve_nonlinear_pf;
use hopf_core::solver::{
    convergence_diagnostics, initial_state, reference_solution, solve_observed, voltage_violations,
    ExecutionMode, ProbeSpec, SolverConfig, StopReason,
};
use hopf_core::trace::{format_sig9, write_profile_csv, write_trace_csv, ProfileRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ControlMode {
    None,
    Linear,
    Improved,
}

impl ControlMode {
    fn gradient(self) -> Option<GradientMode> {
        match self {
            ControlMode::None => None,
            ControlMode::Linear => Some(GradientMode::Linear),
            ControlMode::Improved => Some(GradientMode::Improved),
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlMode::None => "none",
            ControlMode::Linear => "linear",
            ControlMode::Improved => "improved",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Execution {
    Centralized,
    Hierarchical,
}

impl From<Execution> for ExecutionMode {
    fn from(e: Execution) -> Self {
        match e {
            Execution::Centralized => ExecutionMode::Centralized,
            Execution::Hierarchical => ExecutionMode::Hierarchical,
        }
    }
}

impl fmt::Display for Execution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Execution::Centralized => "centralized",
            Execution::Hierarchical => "hierarchical",
        })
    }
}

/// Solver settings given on the command line; unset fields fall back to the
/// feeder's scenario block, then to the solver defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverOverrides {
    pub sigma_u: Option<f64>,
    pub sigma_mu: Option<f64>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub max_iters: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub feeder_path: PathBuf,
    pub mode: ControlMode,
    pub execution: Execution,
    /// Replaces the feeder's own load scale when set.
    pub load_scale: Option<f64>,
    pub overrides: SolverOverrides,
    pub out_dir: PathBuf,
    pub diagnostics: bool,
    pub probe: ProbeSpec,
    /// Write zeros in the timing column so repeated runs give identical files.
    pub no_timing: bool,
}

impl ScenarioSpec {
    pub fn new(feeder_path: impl Into<PathBuf>, mode: ControlMode, out_dir: impl Into<PathBuf>) -> Self {
        ScenarioSpec {
            feeder_path: feeder_path.into(),
            mode,
            execution: Execution::Centralized,
            load_scale: None,
            overrides: SolverOverrides::default(),
            out_dir: out_dir.into(),
            diagnostics: false,
            probe: ProbeSpec::default(),
            no_timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSummary {
    pub feeder: String,
    pub mode: ControlMode,
    pub execution: Execution,
    pub min_v: f64,
    pub max_v: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Nodes outside `[v_min, v_max]` at the final state.
    pub violations: usize,
    pub wall_ms: f64,
    /// Total protocol messages; hierarchical runs only.
    pub messages: Option<usize>,
    pub trace_path: Option<PathBuf>,
    pub profile_path: PathBuf,
    pub diagnostics_path: Option<PathBuf>,
}

impl fmt::Display for ScenarioSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: min_v {:.6} max_v {:.6} iterations {}{} violations {} wall_ms {:.1}",
            self.feeder,
            self.mode,
            self.execution,
            self.min_v,
            self.max_v,
            self.iterations,
            if self.converged { " (converged)" } else { "" },
            self.violations,
            self.wall_ms
        )?;
        if let Some(m) = self.messages {
            write!(f, " messages {m}")?;
        }
        Ok(())
    }
}

fn feeder_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "feeder".into())
}

fn load(path: &Path) -> Result<Feeder> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_feeder(&text).with_context(|| format!("parsing {}", path.display()))
}

fn scaled_network(feeder: &Feeder, load_scale: Option<f64>) -> Result<RadialNetwork> {
    let scale = load_scale.unwrap_or(feeder.scenario.load_scale);
    if !(scale > 0.0 && scale.is_finite()) {
        bail!("load scale must be positive, got {scale}");
    }
    Ok(feeder.network.scaled(scale)?)
}

pub fn solver_config(feeder: &Feeder, spec: &ScenarioSpec) -> SolverConfig {
    let d = SolverConfig::default();
    let s = &feeder.scenario;
    let o = &spec.overrides;
    SolverConfig {
        sigma_u: o.sigma_u.or(s.sigma_u).unwrap_or(d.sigma_u),
        sigma_mu: o.sigma_mu.or(s.sigma_mu).unwrap_or(d.sigma_mu),
        epsilon: o.epsilon.or(s.epsilon).unwrap_or(d.epsilon),
        lambda_stop: o.lambda.unwrap_or(d.lambda_stop),
        max_iters: o.max_iters.unwrap_or(d.max_iters),
        gradient_mode: spec.mode.gradient().unwrap_or(d.gradient_mode),
        execution: spec.execution.into(),
        ..d
    }
    .with_magnitude_bounds(s.v_min_pu, s.v_max_pu)
}

fn artifact(spec: &ScenarioSpec, suffix: &str) -> PathBuf {
    spec.out_dir.join(format!(
        "{}_{}_{}_{suffix}",
        feeder_stem(&spec.feeder_path),
        spec.mode,
        spec.execution
    ))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn profile(network: &RadialNetwork, v: &[f64]) -> Vec<ProfileRow> {
    network
        .nodes()
        .iter()
        .zip(v)
        .map(|(n, v)| ProfileRow {
            bus: network.bus(n.bus).id,
            phase: n.phase,
            vmag_pu: v.sqrt(),
        })
        .collect()
}

fn extremes(v: &[f64]) -> (f64, f64) {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    (lo.sqrt(), hi.sqrt())
}

/// Runs one scenario and writes its artifacts to `spec.out_dir`. A solver
/// failure still writes the trace and profile of the last good state
/// before returning the error.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioSummary> {
    let feeder = load(&spec.feeder_path)?;
    let network = scaled_network(&feeder, spec.load_scale)?;
    let config = solver_config(&feeder, spec);
    fs::create_dir_all(&spec.out_dir).with_context(|| format!("creating {}", spec.out_dir.display()))?;
    let profile_path = artifact(spec, "profile.csv");
    let name = feeder_stem(&spec.feeder_path);

    if spec.mode == ControlMode::None {
        let started = Instant::now();
        let pf = solve_nonlinear_pf(&network, &network.nominal_injections())?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        let v = pf.v_nodes(&network);
        write(&profile_path, &write_profile_csv(&profile(&network, &v)))?;
        let (min_v, max_v) = extremes(&v);
        return Ok(ScenarioSummary {
            feeder: name,
            mode: spec.mode,
            execution: spec.execution,
            min_v,
            max_v,
            iterations: 0,
            converged: true,
            violations: voltage_violations(&v, &config, 0.0),
            wall_ms,
            messages: None,
            trace_path: None,
            profile_path,
            diagnostics_path: None,
        });
    }

    let init = initial_state(&network, &config)?;
    let started = Instant::now();
    let outcome = solve_observed(&network, &feeder.clustering, &config, init, |_, _| {})?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut records = outcome.trace.records.clone();
    if spec.no_timing {
        records.iter_mut().for_each(|r| r.ms = 0.0);
    }
    let trace_path = artifact(spec, "trace.csv");
    write(&trace_path, &write_trace_csv(&records))?;
    let v = outcome.state.pf.v_nodes(&network);
    write(&profile_path, &write_profile_csv(&outcome.trace.profile))?;
    if let StopReason::Failed(e) = &outcome.status {
        bail!(
            "solver stopped after iteration {}: {e}; partial artifacts in {}",
            outcome.state.iter,
            spec.out_dir.display()
        );
    }

    let diagnostics_path = if spec.diagnostics {
        let star = reference_solution(&network, &feeder.clustering, &config)?;
        let d = convergence_diagnostics(
            &network,
            &star.state.u,
            &star.state.duals,
            &config,
            spec.probe,
        )?;
        let path = artifact(spec, "diagnostics.txt");
        write(&path, &d.to_report())?;
        Some(path)
    } else {
        None
    };

    let (min_v, max_v) = extremes(&v);
    Ok(ScenarioSummary {
        feeder: name,
        mode: spec.mode,
        execution: spec.execution,
        min_v,
        max_v,
        iterations: outcome.trace.records.len(),
        converged: outcome.converged(),
        violations: voltage_violations(&v, &config, 0.0),
        wall_ms,
        messages: match spec.execution {
            Execution::Hierarchical => Some(outcome.ledger.total_messages()),
            Execution::Centralized => None,
        },
        trace_path: Some(trace_path),
        profile_path,
        diagnostics_path,
    })
}

/// One row per scenario; failed scenarios keep their error text.
#[derive(Debug)]
pub struct Comparison {
    pub rows: Vec<(ControlMode, Execution, Result<ScenarioSummary, String>)>,
    pub csv_path: PathBuf,
}

impl Comparison {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|(_, _, r)| r.is_ok())
    }

    pub fn get(&self, mode: ControlMode, execution: Execution) -> Option<&ScenarioSummary> {
        self.rows
            .iter()
            .find(|(m, e, _)| *m == mode && *e == execution)
            .and_then(|(_, _, r)| r.as_ref().ok())
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<9} {:<13} {:>10} {:>10} {:>10} {:>10} {:>9}\n",
            "mode", "execution", "min_v", "violations", "iterations", "wall_ms", "messages"
        );
        for (mode, exec, r) in &self.rows {
            match r {
                Ok(s) => out.push_str(&format!(
                    "{:<9} {:<13} {:>10.6} {:>10} {:>10} {:>10.1} {:>9}\n",
                    mode.to_string(),
                    exec.to_string(),
                    s.min_v,
                    s.violations,
                    iterations_cell(s),
                    s.wall_ms,
                    s.messages.map(|m| m.to_string()).unwrap_or_else(|| "-".into())
                )),
                Err(e) => out.push_str(&format!("{:<9} {:<13} error: {e}\n", mode.to_string(), exec.to_string())),
            }
        }
        out
    }

    fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["mode", "execution", "min_v", "violations", "iterations", "converged", "wall_ms", "messages", "error"])?;
        for (mode, exec, r) in &self.rows {
            let (mode, exec) = (mode.to_string(), exec.to_string());
            match r {
                Ok(s) => w.write_record([
                    mode,
                    exec,
                    format_sig9(s.min_v),
                    s.violations.to_string(),
                    s.iterations.to_string(),
                    s.converged.to_string(),
                    format_sig9(s.wall_ms),
                    s.messages.map(|m| m.to_string()).unwrap_or_default(),
                    String::new(),
                ])?,
                Err(e) => w.write_record([mode, exec, String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), e.clone()])?,
            }
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

fn iterations_cell(s: &ScenarioSummary) -> String {
    match (s.mode, s.converged) {
        (ControlMode::None, _) => "-".into(),
        (_, true) => s.iterations.to_string(),
        (_, false) => format!(">{}", s.iterations),
    }
}

/// Runs no control, linear and improved control centrally, then improved
/// control hierarchically. Writes `<stem>_compare.csv` next to the
/// per-scenario artifacts.
pub fn compare_controls(feeder_path: &Path, out_dir: &Path) -> Result<Comparison> {
    let plan = [
        (ControlMode::None, Execution::Centralized),
        (ControlMode::Linear, Execution::Centralized),
        (ControlMode::Improved, Execution::Centralized),
        (ControlMode::Improved, Execution::Hierarchical),
    ];
    let rows = plan
        .into_iter()
        .map(|(mode, execution)| {
            let spec = ScenarioSpec {
                execution,
                ..ScenarioSpec::new(feeder_path, mode, out_dir)
            };
            (mode, execution, run_scenario(&spec).map_err(|e| format!("{e:#}")))
        })
        .collect();
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let cmp = Comparison {
        rows,
        csv_path: out_dir.join(format!("{}_compare.csv", feeder_stem(feeder_path))),
    };
    write(&cmp.csv_path, &cmp.to_csv()?)?;
    Ok(cmp)
}

/// Network and clustering summary of a feeder that passed validation.
pub fn validate_feeder(feeder_path: &Path) -> Result<String> {
    let f = load(feeder_path)?;
    let net = &f.network;
    let mut out = format!(
        "{}: {} buses, {} lines, {} nodes ({} controllable), phases {}\n",
        feeder_stem(feeder_path),
        net.num_buses(),
        net.num_lines(),
        net.nodes().len(),
        net.control_nodes().len(),
        net.network_phases()
    );
    for (k, s) in f.clustering.subtrees.iter().enumerate() {
        let ids: Vec<String> = s.members.iter().map(|&b| net.bus(b).id.to_string()).collect();
        out.push_str(&format!(
            "subtree {k}: root {} members [{}]\n",
            net.bus(s.root).id,
            ids.join(", ")
        ));
    }
    let ids: Vec<String> = f.clustering.unclustered.iter().map(|&b| net.bus(b).id.to_string()).collect();
    out.push_str(&format!("unclustered: [{}]\nclustering valid\n", ids.join(", ")));
    Ok(out)
}
