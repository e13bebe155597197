//! Writes the bundled feeder fixtures and their manifest.
//!
//! Usage: `cargo run -p hopf-core --example generate_fixtures -- <out-dir>`

use std::fs;
use std::path::{Path, PathBuf};

use hopf_core::cluster::{Clustering, Subtree};
use hopf_core::feeder::{fractional_bounds, FeederDocument, ScenarioParams};
use hopf_core::network::{Bus, Line, RadialNetwork, SlackSpec};
use hopf_core::phase::{Phase, PhaseMatrix, PhaseSet, C64};
use serde_json::json;

fn phases(s: &str) -> PhaseSet {
    s.parse().expect("phase string")
}

/// Self `k·(r_s + i x_s)`, mutual `k·(r_m + i x_m)` on the given phases.
fn line_z(set: PhaseSet, k: f64) -> PhaseMatrix {
    let own = C64::new(0.30, 0.60) * k;
    let mutual = C64::new(0.10, 0.25) * k;
    PhaseMatrix::from_fn(set, |a, b| if a == b { own } else { mutual })
}

fn line(from: usize, to: usize, set: &str, k: f64) -> Line {
    let set = phases(set);
    Line {
        from,
        to,
        phases: set,
        z: line_z(set, k),
    }
}

/// Deterministic load pattern, p.u.
fn load(bus: usize, phase: Phase, base: f64) -> C64 {
    let step = ((3 * bus + phase.index()) % 4) as f64 / 3.0;
    let p = base * (1.0 + 0.5 * step);
    -C64::new(p, 0.45 * p)
}

fn loaded_bus(id: usize, set: &str, base: f64, controllable: bool, floor: f64) -> Bus {
    let set = phases(set);
    let mut bus = Bus::new(id, set);
    for p in set.iter() {
        let s = load(id, p, base);
        bus = bus.with_load(p, s);
        if controllable {
            bus = bus.with_bounds(p, fractional_bounds(s, floor));
        }
    }
    bus
}

fn two_bus() -> FeederDocument {
    let a = phases("a");
    let s = -C64::new(0.1, 0.05);
    let buses = vec![
        Bus::new(0, a),
        Bus::new(1, a).with_load(Phase::A, s).with_bounds(Phase::A, fractional_bounds(s, 0.3)),
    ];
    let z = PhaseMatrix::from_fn(a, |_, _| C64::new(0.01, 0.02));
    let lines = vec![Line {
        from: 0,
        to: 1,
        phases: a,
        z,
    }];
    let net = RadialNetwork::build(buses, lines, SlackSpec::default()).expect("two-bus network");
    let clustering = Clustering::flat(&net);
    FeederDocument::from_network("two_bus", &net, &clustering, ScenarioParams::default())
}

fn nine_bus_network() -> RadialNetwork {
    let buses = vec![
        Bus::new(0, phases("abc")),
        loaded_bus(1, "abc", 0.010, false, 0.3),
        loaded_bus(2, "abc", 0.010, false, 0.3),
        loaded_bus(3, "abc", 0.015, true, 0.3),
        loaded_bus(4, "abc", 0.015, true, 0.3),
        loaded_bus(5, "abc", 0.015, true, 0.3),
        loaded_bus(6, "abc", 0.010, true, 0.3),
        loaded_bus(7, "abc", 0.010, true, 0.3),
        loaded_bus(8, "c", 0.020, true, 0.3),
    ];
    let lines = vec![
        line(0, 1, "abc", 0.05),
        line(1, 2, "abc", 0.05),
        line(2, 3, "abc", 0.04),
        line(3, 4, "abc", 0.04),
        line(2, 5, "abc", 0.04),
        line(5, 6, "abc", 0.04),
        line(6, 7, "abc", 0.03),
        line(3, 8, "c", 0.06),
    ];
    RadialNetwork::build(buses, lines, SlackSpec::default()).expect("nine-bus network")
}

fn nine_bus_y() -> FeederDocument {
    let net = nine_bus_network();
    let clustering = Clustering {
        subtrees: vec![
            Subtree {
                root: 3,
                members: vec![3, 4, 8],
            },
            Subtree {
                root: 5,
                members: vec![5, 6, 7],
            },
        ],
        unclustered: vec![1, 2],
    };
    FeederDocument::from_network("nine_bus_y", &net, &clustering, ScenarioParams::default())
}

/// Subtree `{2,3,4,8}` is fine on its own, but the path from subtree root 5
/// to the slack crosses bus 2, which belongs to it.
fn cluster_violation() -> FeederDocument {
    let net = nine_bus_network();
    let clustering = Clustering {
        subtrees: vec![
            Subtree {
                root: 2,
                members: vec![2, 3, 4, 8],
            },
            Subtree {
                root: 5,
                members: vec![5, 6, 7],
            },
        ],
        unclustered: vec![1],
    };
    FeederDocument::from_network("cluster_violation", &net, &clustering, ScenarioParams::default())
}

pub const FEEDER25_SIGMA_U: f64 = 2e-3;
pub const FEEDER25_SIGMA_MU: f64 = 3.7e-2;
pub const FEEDER25_EPSILON: f64 = 0.1;

fn feeder25() -> FeederDocument {
    let trunk_k = 0.02;
    let lateral_k = 0.15;
    let base = 0.026;
    let floor = 0.3;
    let mut buses = vec![Bus::new(0, phases("abc"))];
    for id in 1..=4 {
        buses.push(loaded_bus(id, "abc", base, false, floor));
    }
    let members: [(usize, &str); 20] = [
        (5, "abc"),
        (6, "abc"),
        (7, "abc"),
        (8, "abc"),
        (9, "abc"),
        (10, "abc"),
        (11, "abc"),
        (12, "abc"),
        (13, "abc"),
        (14, "abc"),
        (15, "ab"),
        (16, "ab"),
        (17, "abc"),
        (18, "abc"),
        (19, "abc"),
        (20, "abc"),
        (21, "abc"),
        (22, "c"),
        (23, "c"),
        (24, "abc"),
    ];
    for (id, set) in members {
        buses.push(loaded_bus(id, set, base, true, floor));
    }
    let mut lines = vec![
        line(0, 1, "abc", trunk_k),
        line(1, 2, "abc", trunk_k),
        line(2, 3, "abc", trunk_k),
        line(3, 4, "abc", trunk_k),
    ];
    let laterals: [(usize, usize, &str); 20] = [
        (2, 5, "abc"),
        (5, 6, "abc"),
        (6, 7, "abc"),
        (7, 8, "abc"),
        (6, 9, "abc"),
        (9, 10, "abc"),
        (5, 11, "abc"),
        (3, 12, "abc"),
        (12, 13, "abc"),
        (13, 14, "abc"),
        (13, 15, "ab"),
        (15, 16, "ab"),
        (12, 17, "abc"),
        (4, 18, "abc"),
        (18, 19, "abc"),
        (19, 20, "abc"),
        (20, 21, "abc"),
        (19, 22, "c"),
        (22, 23, "c"),
        (18, 24, "abc"),
    ];
    for (from, to, set) in laterals {
        lines.push(line(from, to, set, lateral_k));
    }
    let net = RadialNetwork::build(buses, lines, SlackSpec::default()).expect("25-bus network");
    let clustering = Clustering {
        subtrees: vec![
            Subtree {
                root: 5,
                members: vec![5, 6, 7, 8, 9, 10, 11],
            },
            Subtree {
                root: 12,
                members: vec![12, 13, 14, 15, 16, 17],
            },
            Subtree {
                root: 18,
                members: vec![18, 19, 20, 21, 22, 23, 24],
            },
        ],
        unclustered: vec![1, 2, 3, 4],
    };
    let scenario = ScenarioParams {
        load_scale: 2.0,
        controllable_fraction_floor: floor,
        sigma_u: Some(FEEDER25_SIGMA_U),
        sigma_mu: Some(FEEDER25_SIGMA_MU),
        epsilon: Some(FEEDER25_EPSILON),
        ..ScenarioParams::default()
    };
    FeederDocument::from_network("feeder25", &net, &clustering, scenario)
}

fn write(dir: &Path, file: &str, doc: &FeederDocument) -> serde_json::Value {
    fs::write(dir.join(file), doc.to_json() + "\n").expect("write fixture");
    json!({
        "file": file,
        "buses": doc.buses.len(),
        "lines": doc.lines.len(),
        "subtrees": doc.clustering.subtrees.len(),
    })
}

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures"));
    fs::create_dir_all(&dir).expect("create output directory");
    let entries = vec![
        write(&dir, "two_bus.json", &two_bus()),
        write(&dir, "nine_bus_y.json", &nine_bus_y()),
        write(&dir, "feeder25.json", &feeder25()),
        write(&dir, "cluster_violation.json", &cluster_violation()),
    ];
    let manifest = json!({ "fixtures": entries });
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest") + "\n",
    )
    .expect("write manifest");
}
