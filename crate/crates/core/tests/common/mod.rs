#![allow(dead_code)]

use std::path::PathBuf;

use hopf_core::feeder::{parse_feeder, Feeder};
use hopf_core::network::RadialNetwork;
use hopf_core::solver::SolverConfig;

pub const FIXTURES: [&str; 3] = ["two_bus.json", "nine_bus_y.json", "feeder25.json"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).expect("fixture readable")
}

pub fn feeder(name: &str) -> Feeder {
    parse_feeder(&fixture_text(name)).expect("fixture parses")
}

/// Network with the fixture's load scale applied.
pub fn loaded(name: &str) -> (Feeder, RadialNetwork) {
    let f = feeder(name);
    let net = f.scenario_network().expect("scaled network");
    (f, net)
}

/// Solver settings a fixture carries, on top of the defaults.
pub fn tuned_config(f: &Feeder) -> SolverConfig {
    let d = SolverConfig::default();
    SolverConfig {
        sigma_u: f.scenario.sigma_u.unwrap_or(d.sigma_u),
        sigma_mu: f.scenario.sigma_mu.unwrap_or(d.sigma_mu),
        epsilon: f.scenario.epsilon.unwrap_or(d.epsilon),
        ..d
    }
    .with_magnitude_bounds(f.scenario.v_min_pu, f.scenario.v_max_pu)
}
