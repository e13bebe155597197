use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hopf_core::solver::ProbeSpec;
use hopf_cli::{
    compare_controls, run_scenario, validate_feeder, ControlMode, Execution, ScenarioSpec,
    SolverOverrides,
};

#[derive(Parser)]
#[command(name = "hopf", version, about = "Voltage control experiments on radial feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one control scenario and write its trace and voltage profile.
    Run(RunArgs),
    /// Run every control mode on a feeder and print a comparison table.
    Compare {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a feeder file and report its network and clustering.
    Validate {
        #[arg(long)]
        feeder: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    feeder: PathBuf,
    #[arg(long, value_enum, default_value_t = ControlMode::Improved)]
    mode: ControlMode,
    #[arg(long, value_enum, default_value_t = Execution::Centralized)]
    execution: Execution,
    /// Multiplier on nominal loads; defaults to the feeder's own value.
    #[arg(long)]
    load_scale: Option<f64>,
    #[arg(long)]
    sigma_u: Option<f64>,
    #[arg(long)]
    sigma_mu: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Stopping threshold on the primal and dual step norms.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also estimate the contraction constants around the converged point.
    #[arg(long)]
    diagnostics: bool,
    /// Radius of the sampling ball for diagnostics.
    #[arg(long)]
    probe_delta: Option<f64>,
    #[arg(long)]
    probe_samples: Option<usize>,
    /// Write zeros in the trace timing column.
    #[arg(long)]
    no_timing: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => {
            let probe = ProbeSpec::default();
            let spec = ScenarioSpec {
                feeder_path: a.feeder,
                mode: a.mode,
                execution: a.execution,
                load_scale: a.load_scale,
                overrides: SolverOverrides {
                    sigma_u: a.sigma_u,
                    sigma_mu: a.sigma_mu,
                    epsilon: a.epsilon,
                    lambda: a.lambda,
                    max_iters: a.max_iters,
                },
                out_dir: a.out,
                diagnostics: a.diagnostics,
                probe: ProbeSpec {
                    delta: a.probe_delta.unwrap_or(probe.delta),
                    samples: a.probe_samples.unwrap_or(probe.samples),
                    ..probe
                },
                no_timing: a.no_timing,
            };
            run_scenario(&spec).map(|s| {
                println!("{s}");
                true
            })
        }
        Command::Compare { feeder, out } => compare_controls(&feeder, &out).map(|c| {
            print!("{}", c.to_table());
            c.all_ok()
        }),
        Command::Validate { feeder } => validate_feeder(&feeder).map(|r| {
            print!("{r}");
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
