//! Rooted radial network: buses, lines, phase bookkeeping and tree queries.

use std::collections::HashMap;
use std::f64::consts::PI;

use thiserror::Error;

use crate::phase::{Phase, PhaseMatrix, PhaseSet, PhaseVector, C64};

pub type BusIdx = usize;
pub type LineIdx = usize;
/// Index into [`RadialNetwork::nodes`]: one entry per energized (bus, phase).
pub type NodeIdx = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("slack bus {0} is not declared")]
    MissingSlack(usize),
    #[error("cycle detected at bus {0}")]
    CycleDetected(usize),
    #[error("bus {0} is not reachable from the slack bus")]
    DisconnectedBus(usize),
    #[error("phase mismatch: {0}")]
    PhaseMismatch(String),
    #[error("line {from}->{to}: impedance matrix is not symmetric")]
    AsymmetricImpedance { from: usize, to: usize },
    #[error("bus {bus}: {reason}")]
    InvalidBounds { bus: usize, reason: String },
}

/// Box constraint on one phase of a controllable injection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InjectionBox {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl InjectionBox {
    pub fn fixed(s: C64) -> Self {
        InjectionBox {
            p_min: s.re,
            p_max: s.re,
            q_min: s.im,
            q_max: s.im,
        }
    }

    pub fn project(&self, s: C64) -> C64 {
        C64::new(s.re.clamp(self.p_min, self.p_max), s.im.clamp(self.q_min, self.q_max))
    }

    pub fn contains(&self, s: C64, tol: f64) -> bool {
        s.re >= self.p_min - tol
            && s.re <= self.p_max + tol
            && s.im >= self.q_min - tol
            && s.im <= self.q_max + tol
    }

    fn is_valid(&self) -> bool {
        [self.p_min, self.p_max, self.q_min, self.q_max]
            .iter()
            .all(|x| x.is_finite())
            && self.p_min <= self.p_max
            && self.q_min <= self.q_max
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub phases: PhaseSet,
    /// Complex injection per phase in p.u., negative for load.
    pub nominal: PhaseVector,
    /// Per-phase bounds; only meaningful when `controllable`.
    pub bounds: [Option<InjectionBox>; 3],
    pub controllable: bool,
}

impl Bus {
    pub fn new(id: usize, phases: PhaseSet) -> Self {
        Bus {
            id,
            phases,
            nominal: PhaseVector::zeros(phases),
            bounds: [None; 3],
            controllable: false,
        }
    }

    pub fn with_load(mut self, phase: Phase, s: C64) -> Self {
        self.nominal.set(phase, s);
        self
    }

    pub fn with_bounds(mut self, phase: Phase, b: InjectionBox) -> Self {
        self.bounds[phase.index()] = Some(b);
        self.controllable = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub phases: PhaseSet,
    pub z: PhaseMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlackSpec {
    pub bus: usize,
    pub v_magnitude: f64,
    pub angles_deg: [f64; 3],
}

impl Default for SlackSpec {
    fn default() -> Self {
        SlackSpec {
            bus: 0,
            v_magnitude: 1.05,
            angles_deg: [0.0, -120.0, 120.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Node {
    pub bus: BusIdx,
    pub phase: Phase,
}

/// Validated radial network. Immutable after [`RadialNetwork::build`].
#[derive(Clone, Debug)]
pub struct RadialNetwork {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    slack: SlackSpec,
    slack_idx: BusIdx,
    index: HashMap<usize, BusIdx>,
    ends: Vec<(BusIdx, BusIdx)>,
    parent_line: Vec<Option<LineIdx>>,
    children: Vec<Vec<LineIdx>>,
    order: Vec<BusIdx>,
    depth: Vec<usize>,
    phases: Vec<PhaseSet>,
    nodes: Vec<Node>,
    node_index: Vec<[Option<NodeIdx>; 3]>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl RadialNetwork {
    pub fn build(buses: Vec<Bus>, lines: Vec<Line>, slack: SlackSpec) -> Result<Self, NetworkError> {
        let mut index = HashMap::new();
        for (k, b) in buses.iter().enumerate() {
            if index.insert(b.id, k).is_some() {
                return Err(NetworkError::DuplicateBus(b.id));
            }
        }
        let slack_idx = *index
            .get(&slack.bus)
            .ok_or(NetworkError::MissingSlack(slack.bus))?;

        let n = buses.len();
        let mut ends = Vec::with_capacity(lines.len());
        let mut parent_line = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (l, line) in lines.iter().enumerate() {
            let f = *index.get(&line.from).ok_or(NetworkError::UnknownBus(line.from))?;
            let t = *index.get(&line.to).ok_or(NetworkError::UnknownBus(line.to))?;
            if t == slack_idx || f == t || parent_line[t].is_some() {
                return Err(NetworkError::CycleDetected(line.to));
            }
            if line.z.phases() != line.phases {
                return Err(NetworkError::PhaseMismatch(format!(
                    "line {}->{}: impedance indexed by {} but line phases are {}",
                    line.from,
                    line.to,
                    line.z.phases(),
                    line.phases
                )));
            }
            let scale = line.z.max_abs().max(1.0);
            if !line.z.is_symmetric(SYMMETRY_TOL * scale) {
                return Err(NetworkError::AsymmetricImpedance {
                    from: line.from,
                    to: line.to,
                });
            }
            for end in [f, t] {
                if !line.phases.is_subset_of(buses[end].phases) {
                    return Err(NetworkError::PhaseMismatch(format!(
                        "line {}->{} phases {} not within bus {} phases {}",
                        line.from, line.to, line.phases, buses[end].id, buses[end].phases
                    )));
                }
            }
            parent_line[t] = Some(l);
            children[f].push(l);
            ends.push((f, t));
        }

        // Breadth-first from the slack gives a root-to-leaf order.
        let mut order = Vec::with_capacity(n);
        let mut depth = vec![0; n];
        let mut phases: Vec<PhaseSet> = buses.iter().map(|b| b.phases).collect();
        let mut seen = vec![false; n];
        order.push(slack_idx);
        seen[slack_idx] = true;
        let mut head = 0;
        while head < order.len() {
            let b = order[head];
            head += 1;
            for &l in &children[b] {
                let (f, t) = ends[l];
                if seen[t] {
                    return Err(NetworkError::CycleDetected(buses[t].id));
                }
                if !lines[l].phases.is_subset_of(phases[f]) {
                    return Err(NetworkError::PhaseMismatch(format!(
                        "line {}->{} phases {} exceed energized phases {} of bus {}",
                        lines[l].from, lines[l].to, lines[l].phases, phases[f], buses[f].id
                    )));
                }
                phases[t] = lines[l].phases;
                depth[t] = depth[f] + 1;
                seen[t] = true;
                order.push(t);
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            // A bus with a parent that is never reached sits on a loop.
            return Err(if parent_line[k].is_some() {
                NetworkError::CycleDetected(buses[k].id)
            } else {
                NetworkError::DisconnectedBus(buses[k].id)
            });
        }

        for (k, bus) in buses.iter().enumerate() {
            if k == slack_idx {
                continue;
            }
            for (p, s) in bus.nominal.iter() {
                if !phases[k].contains(p) && s != C64::new(0.0, 0.0) {
                    return Err(NetworkError::PhaseMismatch(format!(
                        "bus {} has injection on unenergized phase {p}",
                        bus.id
                    )));
                }
            }
            if bus.controllable {
                for p in phases[k].iter() {
                    let b = bus.bounds[p.index()].ok_or_else(|| NetworkError::InvalidBounds {
                        bus: bus.id,
                        reason: format!("controllable bus lacks bounds on phase {p}"),
                    })?;
                    if !b.is_valid() {
                        return Err(NetworkError::InvalidBounds {
                            bus: bus.id,
                            reason: format!("empty box on phase {p}"),
                        });
                    }
                    if !b.contains(bus.nominal.get_or_zero(p), 1e-12) {
                        return Err(NetworkError::InvalidBounds {
                            bus: bus.id,
                            reason: format!("nominal injection outside bounds on phase {p}"),
                        });
                    }
                }
            }
        }

        let mut nodes = Vec::new();
        let mut node_index = vec![[None; 3]; n];
        for &b in &order {
            if b == slack_idx {
                continue;
            }
            for p in phases[b].iter() {
                node_index[b][p.index()] = Some(nodes.len());
                nodes.push(Node { bus: b, phase: p });
            }
        }

        Ok(RadialNetwork {
            buses,
            lines,
            slack,
            slack_idx,
            index,
            ends,
            parent_line,
            children,
            order,
            depth,
            phases,
            nodes,
            node_index,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn bus(&self, b: BusIdx) -> &Bus {
        &self.buses[b]
    }

    pub fn line(&self, l: LineIdx) -> &Line {
        &self.lines[l]
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn slack(&self) -> &SlackSpec {
        &self.slack
    }

    pub fn slack_idx(&self) -> BusIdx {
        self.slack_idx
    }

    pub fn idx_of(&self, id: usize) -> Result<BusIdx, NetworkError> {
        self.index.get(&id).copied().ok_or(NetworkError::UnknownBus(id))
    }

    fn check(&self, b: BusIdx) -> Result<(), NetworkError> {
        if b < self.buses.len() {
            Ok(())
        } else {
            Err(NetworkError::UnknownBus(b))
        }
    }

    /// Energized phases of a bus: its parent line's phases, or the declared
    /// phases for the slack bus.
    pub fn phases(&self, b: BusIdx) -> PhaseSet {
        self.phases[b]
    }

    /// `(from, to)` bus indices of a line.
    pub fn ends(&self, l: LineIdx) -> (BusIdx, BusIdx) {
        self.ends[l]
    }

    pub fn parent_line(&self, b: BusIdx) -> Option<LineIdx> {
        self.parent_line[b]
    }

    pub fn parent_bus(&self, b: BusIdx) -> Option<BusIdx> {
        self.parent_line[b].map(|l| self.ends[l].0)
    }

    pub fn child_lines(&self, b: BusIdx) -> &[LineIdx] {
        &self.children[b]
    }

    /// Buses from the slack outward; every bus appears after its parent.
    pub fn topo_order(&self) -> &[BusIdx] {
        &self.order
    }

    pub fn depth(&self, b: BusIdx) -> usize {
        self.depth[b]
    }

    /// Lines on the unique path from the root to `h`, root first.
    pub fn path_to_root(&self, h: BusIdx) -> Result<Vec<LineIdx>, NetworkError> {
        self.check(h)?;
        let mut path = Vec::with_capacity(self.depth[h]);
        let mut b = h;
        while let Some(l) = self.parent_line[b] {
            path.push(l);
            b = self.ends[l].0;
        }
        path.reverse();
        Ok(path)
    }

    /// Lines shared by the root paths of `j` and `h`, root first.
    pub fn common_path(&self, j: BusIdx, h: BusIdx) -> Result<Vec<LineIdx>, NetworkError> {
        let a = self.lowest_common_ancestor(j, h)?;
        self.path_to_root(a)
    }

    pub fn lowest_common_ancestor(&self, j: BusIdx, h: BusIdx) -> Result<BusIdx, NetworkError> {
        self.check(j)?;
        self.check(h)?;
        let (mut a, mut b) = (j, h);
        while self.depth[a] > self.depth[b] {
            a = self.parent_bus(a).expect("depth implies parent");
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent_bus(b).expect("depth implies parent");
        }
        while a != b {
            a = self.parent_bus(a).expect("distinct buses below root");
            b = self.parent_bus(b).expect("distinct buses below root");
        }
        Ok(a)
    }

    /// Whether `j` lies on the root path of `h` (i.e. `j` is `h` or one of
    /// its ancestors). The slack bus is never counted.
    pub fn on_path(&self, j: BusIdx, h: BusIdx) -> bool {
        if j == self.slack_idx || self.depth[j] > self.depth[h] {
            return false;
        }
        let mut b = h;
        while self.depth[b] > self.depth[j] {
            b = self.parent_bus(b).expect("depth implies parent");
        }
        b == j
    }

    /// All lines strictly below `xi` (the line ending at `xi` excluded).
    pub fn downstream_lines(&self, xi: BusIdx) -> Result<Vec<LineIdx>, NetworkError> {
        self.check(xi)?;
        let mut out = Vec::new();
        let mut stack: Vec<LineIdx> = self.children[xi].iter().rev().copied().collect();
        while let Some(l) = stack.pop() {
            out.push(l);
            let t = self.ends[l].1;
            stack.extend(self.children[t].iter().rev().copied());
        }
        Ok(out)
    }

    /// Buses in the subtree rooted at `b`, including `b`.
    pub fn subtree_buses(&self, b: BusIdx) -> Vec<BusIdx> {
        let mut out = vec![b];
        let mut head = 0;
        while head < out.len() {
            let x = out[head];
            head += 1;
            out.extend(self.children[x].iter().map(|&l| self.ends[l].1));
        }
        out
    }

    /// Complex slack voltage on the slack bus phases.
    pub fn slack_voltage(&self) -> PhaseVector {
        let ph = self.phases[self.slack_idx];
        PhaseVector::from_fn(ph, |p| {
            C64::from_polar(self.slack.v_magnitude, self.slack.angles_deg[p.index()] * PI / 180.0)
        })
    }

    /// Non-slack (bus, phase) pairs in topological order.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, b: BusIdx, p: Phase) -> Option<NodeIdx> {
        self.node_index[b][p.index()]
    }

    /// Nominal injections indexed by node.
    pub fn nominal_injections(&self) -> Vec<C64> {
        self.nodes
            .iter()
            .map(|n| self.buses[n.bus].nominal.get_or_zero(n.phase))
            .collect()
    }

    /// Box for a node; uncontrollable nodes get a degenerate box at nominal.
    pub fn node_box(&self, k: NodeIdx) -> InjectionBox {
        let n = self.nodes[k];
        let bus = &self.buses[n.bus];
        if bus.controllable {
            bus.bounds[n.phase.index()].expect("validated at build")
        } else {
            InjectionBox::fixed(bus.nominal.get_or_zero(n.phase))
        }
    }

    pub fn is_controllable(&self, k: NodeIdx) -> bool {
        self.buses[self.nodes[k].bus].controllable
    }

    /// Nodes whose injections the controller may change.
    pub fn control_nodes(&self) -> Vec<NodeIdx> {
        (0..self.nodes.len()).filter(|&k| self.is_controllable(k)).collect()
    }

    pub fn project_injections(&self, u: &[C64]) -> Vec<C64> {
        u.iter()
            .enumerate()
            .map(|(k, s)| self.node_box(k).project(*s))
            .collect()
    }

    /// Union of all energized phases.
    pub fn network_phases(&self) -> PhaseSet {
        self.phases[self.slack_idx]
    }

    /// Return a copy with nominal injections and bounds multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Result<RadialNetwork, NetworkError> {
        let buses = self
            .buses
            .iter()
            .map(|b| {
                let mut b = b.clone();
                b.nominal = b.nominal.map(|s| s * scale);
                for slot in b.bounds.iter_mut().flatten() {
                    let (lo_p, hi_p) = sorted(slot.p_min * scale, slot.p_max * scale);
                    let (lo_q, hi_q) = sorted(slot.q_min * scale, slot.q_max * scale);
                    *slot = InjectionBox {
                        p_min: lo_p,
                        p_max: hi_p,
                        q_min: lo_q,
                        q_max: hi_q,
                    };
                }
                b
            })
            .collect();
        RadialNetwork::build(buses, self.lines.clone(), self.slack.clone())
    }
}

fn sorted(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
