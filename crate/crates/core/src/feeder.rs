//! JSON feeder documents: schema, per-unit conversion and validation.
//!
//! A document is versioned (`"version": 1`) and either in per-unit
//! (`"units": "pu"`) or physical units (`"units": "physical"`). Physical
//! documents give injections in kW/kvar per phase and impedances in ohms;
//! conversion uses the per-phase base `z_base = v_base_kv² · 1000 / s_base_kva`
//! with `v_base_kv` the line-to-neutral base voltage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{validate_clustering, Clustering, Subtree};
use crate::network::{Bus, InjectionBox, Line, NetworkError, RadialNetwork, SlackSpec};
use crate::phase::{Phase, PhaseMatrix, PhaseSet, C64};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error in {field}: {message}")]
    Field { field: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
}

impl From<NetworkError> for FeederError {
    fn from(e: NetworkError) -> Self {
        FeederError::Validation(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Pu,
    Physical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Base {
    pub s_base_kva: f64,
    pub v_base_kv: f64,
}

impl Base {
    pub fn z_base(&self) -> f64 {
        self.v_base_kv * self.v_base_kv * 1000.0 / self.s_base_kva
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlackRecord {
    #[serde(default)]
    pub bus: usize,
    pub v_magnitude_pu: f64,
    pub phase_angles_deg: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionRecord {
    pub phase: Phase,
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsRecord {
    pub phase: Phase,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: usize,
    pub phases: PhaseSet,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub injection: Vec<InjectionRecord>,
    #[serde(default)]
    pub controllable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<BoundsRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceEntry {
    pub row: Phase,
    pub col: Phase,
    pub r: f64,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub from: usize,
    pub to: usize,
    pub phases: PhaseSet,
    pub impedance: Vec<ImpedanceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtreeRecord {
    pub root: usize,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ClusteringRecord {
    #[serde(default)]
    pub subtrees: Vec<SubtreeRecord>,
    #[serde(default)]
    pub unclustered: Vec<usize>,
}

/// Scenario parameters carried by a feeder file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    #[serde(default = "one")]
    pub load_scale: f64,
    #[serde(default = "default_floor")]
    pub controllable_fraction_floor: f64,
    #[serde(default = "default_v_min")]
    pub v_min_pu: f64,
    #[serde(default = "default_v_max")]
    pub v_max_pu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

fn one() -> f64 {
    1.0
}
fn default_floor() -> f64 {
    0.3
}
fn default_v_min() -> f64 {
    0.95
}
fn default_v_max() -> f64 {
    1.05
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            load_scale: 1.0,
            controllable_fraction_floor: 0.3,
            v_min_pu: 0.95,
            v_max_pu: 1.05,
            sigma_u: None,
            sigma_mu: None,
            epsilon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederDocument {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub units: Units,
    pub base: Base,
    pub slack: SlackRecord,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    #[serde(default)]
    pub clustering: ClusteringRecord,
    #[serde(default)]
    pub scenario: ScenarioParams,
}

/// Result of parsing: validated network (nominal, unscaled loads),
/// clustering in bus indices, and scenario parameters.
#[derive(Clone, Debug)]
pub struct Feeder {
    pub name: String,
    pub network: RadialNetwork,
    pub clustering: Clustering,
    pub scenario: ScenarioParams,
}

impl Feeder {
    /// Network with the scenario's load scale applied.
    pub fn scenario_network(&self) -> Result<RadialNetwork, NetworkError> {
        self.network.scaled(self.scenario.load_scale)
    }
}

pub fn parse_document(text: &str) -> Result<FeederDocument, FeederError> {
    serde_json::from_str(text).map_err(|e| FeederError::Schema {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn parse_feeder(text: &str) -> Result<Feeder, FeederError> {
    let doc = parse_document(text)?;
    doc.to_feeder()
}

fn field(field: impl Into<String>, message: impl Into<String>) -> FeederError {
    FeederError::Field {
        field: field.into(),
        message: message.into(),
    }
}

impl FeederDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn to_feeder(&self) -> Result<Feeder, FeederError> {
        if self.version != SCHEMA_VERSION {
            return Err(field(
                "version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.version),
            ));
        }
        if !(self.scenario.load_scale > 0.0 && self.scenario.load_scale.is_finite()) {
            return Err(field("scenario.load_scale", "must be positive"));
        }
        if self.scenario.v_min_pu >= self.scenario.v_max_pu {
            return Err(field("scenario", "v_min_pu must be below v_max_pu"));
        }
        let (s_scale, z_scale) = match self.units {
            Units::Pu => (1.0, 1.0),
            Units::Physical => {
                if !(self.base.s_base_kva > 0.0 && self.base.v_base_kv > 0.0) {
                    return Err(field("base", "bases must be positive"));
                }
                (1.0 / self.base.s_base_kva, 1.0 / self.base.z_base())
            }
        };

        let mut buses = Vec::with_capacity(self.buses.len());
        for (k, rec) in self.buses.iter().enumerate() {
            let mut bus = Bus::new(rec.id, rec.phases);
            for inj in &rec.injection {
                if !rec.phases.contains(inj.phase) {
                    return Err(field(
                        format!("buses[{k}].injection"),
                        format!("phase {} not in bus phases {}", inj.phase, rec.phases),
                    ));
                }
                bus.nominal
                    .set(inj.phase, C64::new(inj.p * s_scale, inj.q * s_scale));
            }
            for b in &rec.bounds {
                if !rec.phases.contains(b.phase) {
                    return Err(field(
                        format!("buses[{k}].bounds"),
                        format!("phase {} not in bus phases {}", b.phase, rec.phases),
                    ));
                }
                bus.bounds[b.phase.index()] = Some(InjectionBox {
                    p_min: b.p_min * s_scale,
                    p_max: b.p_max * s_scale,
                    q_min: b.q_min * s_scale,
                    q_max: b.q_max * s_scale,
                });
            }
            bus.controllable = rec.controllable;
            buses.push(bus);
        }

        let mut lines = Vec::with_capacity(self.lines.len());
        for (k, rec) in self.lines.iter().enumerate() {
            let mut seen = [[false; 3]; 3];
            let mut z = PhaseMatrix::zeros(rec.phases);
            for e in &rec.impedance {
                if !rec.phases.contains(e.row) || !rec.phases.contains(e.col) {
                    return Err(field(
                        format!("lines[{k}].impedance"),
                        format!("entry ({},{}) outside line phases {}", e.row, e.col, rec.phases),
                    ));
                }
                let slot = &mut seen[e.row.index()][e.col.index()];
                if *slot {
                    return Err(field(
                        format!("lines[{k}].impedance"),
                        format!("duplicate entry ({},{})", e.row, e.col),
                    ));
                }
                *slot = true;
                z.set(e.row, e.col, C64::new(e.r * z_scale, e.x * z_scale));
            }
            for r in rec.phases.iter() {
                for c in rec.phases.iter() {
                    if !seen[r.index()][c.index()] {
                        return Err(field(
                            format!("lines[{k}].impedance"),
                            format!("missing entry ({r},{c})"),
                        ));
                    }
                }
            }
            lines.push(Line {
                from: rec.from,
                to: rec.to,
                phases: rec.phases,
                z,
            });
        }

        let slack = SlackSpec {
            bus: self.slack.bus,
            v_magnitude: self.slack.v_magnitude_pu,
            angles_deg: self.slack.phase_angles_deg,
        };
        let network = RadialNetwork::build(buses, lines, slack)?;

        let idx = |id: usize| {
            network
                .idx_of(id)
                .map_err(|_| field("clustering", format!("unknown bus id {id}")))
        };
        let mut clustering = Clustering::default();
        for s in &self.clustering.subtrees {
            clustering.subtrees.push(Subtree {
                root: idx(s.root)?,
                members: s.members.iter().map(|&m| idx(m)).collect::<Result<_, _>>()?,
            });
        }
        clustering.unclustered = self
            .clustering
            .unclustered
            .iter()
            .map(|&m| idx(m))
            .collect::<Result<_, _>>()?;
        if self.clustering.subtrees.is_empty() && self.clustering.unclustered.is_empty() {
            clustering = Clustering::flat(&network);
        }
        let report = validate_clustering(&network, &clustering);
        if !report.is_valid() {
            let msgs: Vec<String> = report
                .violations
                .iter()
                .map(|v| describe_violation(&network, v))
                .collect();
            return Err(FeederError::Validation(msgs.join("; ")));
        }

        Ok(Feeder {
            name: self.name.clone(),
            network,
            clustering,
            scenario: self.scenario.clone(),
        })
    }

    /// Build a per-unit document from an in-memory network.
    pub fn from_network(
        name: &str,
        network: &RadialNetwork,
        clustering: &Clustering,
        scenario: ScenarioParams,
    ) -> Self {
        let buses = network
            .buses()
            .iter()
            .map(|b| BusRecord {
                id: b.id,
                phases: b.phases,
                injection: b
                    .nominal
                    .iter()
                    .filter(|(_, s)| *s != C64::new(0.0, 0.0))
                    .map(|(phase, s)| InjectionRecord {
                        phase,
                        p: s.re,
                        q: s.im,
                    })
                    .collect(),
                controllable: b.controllable,
                bounds: Phase::ALL
                    .iter()
                    .filter_map(|&phase| {
                        b.bounds[phase.index()].map(|bx| BoundsRecord {
                            phase,
                            p_min: bx.p_min,
                            p_max: bx.p_max,
                            q_min: bx.q_min,
                            q_max: bx.q_max,
                        })
                    })
                    .collect(),
            })
            .collect();
        let lines = network
            .lines()
            .iter()
            .map(|l| LineRecord {
                from: l.from,
                to: l.to,
                phases: l.phases,
                impedance: l
                    .z
                    .entries()
                    .map(|(row, col, z)| ImpedanceEntry {
                        row,
                        col,
                        r: z.re,
                        x: z.im,
                    })
                    .collect(),
            })
            .collect();
        let id = |b: usize| network.bus(b).id;
        let slack = network.slack();
        FeederDocument {
            version: SCHEMA_VERSION,
            name: name.to_string(),
            units: Units::Pu,
            base: Base {
                s_base_kva: 1000.0,
                v_base_kv: 2.4,
            },
            slack: SlackRecord {
                bus: slack.bus,
                v_magnitude_pu: slack.v_magnitude,
                phase_angles_deg: slack.angles_deg,
            },
            buses,
            lines,
            clustering: ClusteringRecord {
                subtrees: clustering
                    .subtrees
                    .iter()
                    .map(|s| SubtreeRecord {
                        root: id(s.root),
                        members: s.members.iter().map(|&m| id(m)).collect(),
                    })
                    .collect(),
                unclustered: clustering.unclustered.iter().map(|&m| id(m)).collect(),
            },
            scenario,
        }
    }

    /// Same feeder expressed in physical units on the given base.
    pub fn to_physical(&self, base: Base) -> FeederDocument {
        assert_eq!(self.units, Units::Pu, "document already physical");
        let s = base.s_base_kva;
        let zb = base.z_base();
        let mut doc = self.clone();
        doc.units = Units::Physical;
        doc.base = base;
        for b in &mut doc.buses {
            for inj in &mut b.injection {
                inj.p *= s;
                inj.q *= s;
            }
            for bx in &mut b.bounds {
                bx.p_min *= s;
                bx.p_max *= s;
                bx.q_min *= s;
                bx.q_max *= s;
            }
        }
        for l in &mut doc.lines {
            for e in &mut l.impedance {
                e.r *= zb;
                e.x *= zb;
            }
        }
        doc
    }
}

fn describe_violation(network: &RadialNetwork, v: &crate::cluster::ClusterViolation) -> String {
    use crate::cluster::ClusterViolation as V;
    let id = |b: usize| network.bus(b).id;
    match v {
        V::PathCrossesSubtree {
            bus,
            crossed,
            subtree,
        } => format!(
            "root path of bus {} crosses bus {} of subtree {subtree}",
            id(*bus),
            id(*crossed)
        ),
        V::Overlap { bus, subtrees } => {
            format!("bus {} in overlapping subtrees {subtrees:?}", id(*bus))
        }
        V::Unassigned(b) => format!("bus {} not assigned", id(*b)),
        V::DuplicateAssignment(b) => format!("bus {} assigned more than once", id(*b)),
        V::NotConnected { subtree, bus } => {
            format!("subtree {subtree} is not connected at bus {}", id(*bus))
        }
        V::RootNotMember { subtree, root } => {
            format!("subtree {subtree} root {} is not a member", id(*root))
        }
        V::SlackAssigned(b) => format!("slack bus {} must not be clustered", id(*b)),
        V::UnknownBus(b) => format!("unknown bus index {b}"),
    }
}

/// Controllable-load box `[p̲, floor·p̲] × [q̲, floor·q̲]` around a nominal
/// load `s = p̲ + i q̲`: the load may be curtailed down to `floor` of itself.
pub fn fractional_bounds(nominal: C64, floor: f64) -> InjectionBox {
    let span = |x: f64| {
        let y = floor * x;
        if x <= y {
            (x, y)
        } else {
            (y, x)
        }
    };
    let (p_min, p_max) = span(nominal.re);
    let (q_min, q_max) = span(nominal.im);
    InjectionBox {
        p_min,
        p_max,
        q_min,
        q_max,
    }
}
