//! Regional controllers (one per subtree) and a central coordinator that
//! together assemble the coupling term without a dense gradient table.
//!
//! Each iteration runs, in a fixed order:
//!
//! 1. buses upload `μ̄ − μ̲` (and, for improved gradients, their parent
//!    line state) to their RC, or to the CC when unclustered;
//! 2. every RC uploads its weighted dual sums per phase to the CC;
//! 3. the CC sends each RC the cross-subtree and unclustered contributions
//!    for its subtree, and sends unclustered buses their full terms;
//! 4. every RC adds its in-subtree term and dispatches to its buses.
//!
//! All data crossing an actor boundary is a message value, counted in the
//! [`MessageLedger`].

use std::collections::HashMap;

use super::{Coupling, Duals, SolverError};
use crate::cluster::{validate_clustering, Clustering};
use crate::gradient::{GradientMode, InjectionKind, LocalTerms, PathSums};
use crate::network::{BusIdx, RadialNetwork};
use crate::phase::{Phase, PhaseMatrix, PhaseSet};
use crate::powerflow::PowerFlowState;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChannelCount {
    pub messages: usize,
    pub scalars: usize,
}

impl ChannelCount {
    fn add(&mut self, scalars: usize) {
        self.messages += 1;
        self.scalars += scalars;
    }
}

/// Messages sent during one coupling computation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IterationMessages {
    pub bus_to_rc: ChannelCount,
    pub bus_to_cc: ChannelCount,
    pub rc_to_cc: ChannelCount,
    pub cc_to_rc: ChannelCount,
    pub rc_to_bus: ChannelCount,
    pub cc_to_bus: ChannelCount,
}

impl IterationMessages {
    pub fn total_messages(&self) -> usize {
        self.channels().iter().map(|c| c.messages).sum()
    }

    pub fn channels(&self) -> [ChannelCount; 6] {
        [
            self.bus_to_rc,
            self.bus_to_cc,
            self.rc_to_cc,
            self.cc_to_rc,
            self.rc_to_bus,
            self.cc_to_bus,
        ]
    }

    pub fn is_empty(&self) -> bool {
        self.total_messages() == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MessageLedger {
    pub iterations: Vec<IterationMessages>,
}

impl MessageLedger {
    pub fn is_empty(&self) -> bool {
        self.iterations.iter().all(IterationMessages::is_empty)
    }

    pub fn total_messages(&self) -> usize {
        self.iterations.iter().map(IterationMessages::total_messages).sum()
    }
}

/// Local state a bus reports about its parent line.
#[derive(Clone, Debug)]
pub struct LineStateReport {
    pub v_parent: [f64; 3],
    pub ell: PhaseMatrix,
    pub s: PhaseMatrix,
}

#[derive(Clone, Debug)]
pub struct BusReport {
    pub bus: BusIdx,
    pub dmu: [f64; 3],
    pub state: Option<LineStateReport>,
}

#[derive(Clone, Copy, Debug)]
pub struct RcAggregate {
    pub subtree: usize,
    /// `Σ_j w_j^φ (μ̄_j^φ − μ̲_j^φ)` indexed by phase.
    pub weighted: [f64; 3],
}

/// Who a CC combination is computed for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombineTarget {
    Subtree(usize),
    Unclustered(BusIdx),
}

#[derive(Clone, Copy, Debug)]
pub struct CcDispatch {
    pub subtree: usize,
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
}

#[derive(Clone, Copy, Debug)]
pub struct GradientDelivery {
    pub bus: BusIdx,
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
}

#[derive(Clone, Debug)]
struct TreeNode {
    parent: Option<BusIdx>,
    depth: usize,
    r: [[f64; 3]; 3],
    x: [[f64; 3]; 3],
}

/// A connected piece of the feeder known to one controller, with root-path
/// sums inherited at its top bus.
#[derive(Clone, Debug)]
struct LocalTree {
    top: BusIdx,
    nodes: HashMap<BusIdx, TreeNode>,
}

impl LocalTree {
    /// `buses` must be in root-to-leaf order, each with its parent either
    /// earlier in the list or equal to `top`.
    fn build(network: &RadialNetwork, top: BusIdx, top_sums: ([[f64; 3]; 3], [[f64; 3]; 3]), buses: &[BusIdx]) -> Self {
        let mut nodes = HashMap::new();
        nodes.insert(
            top,
            TreeNode {
                parent: None,
                depth: 0,
                r: top_sums.0,
                x: top_sums.1,
            },
        );
        for &b in buses {
            let l = network.parent_line(b).expect("non-slack bus");
            let (i, _) = network.ends(l);
            let up = nodes.get(&i).expect("parent precedes child").clone();
            let (mut r, mut x) = (up.r, up.x);
            for (phi, varphi, z) in network.line(l).z.entries() {
                let t = z.conj() * crate::phase::rotation(phi, varphi);
                r[phi.index()][varphi.index()] += 2.0 * t.re;
                x[phi.index()][varphi.index()] -= 2.0 * t.im;
            }
            nodes.insert(
                b,
                TreeNode {
                    parent: Some(i),
                    depth: up.depth + 1,
                    r,
                    x,
                },
            );
        }
        LocalTree { top, nodes }
    }

    fn node(&self, b: BusIdx) -> &TreeNode {
        self.nodes.get(&b).expect("bus known to this controller")
    }

    fn lca(&self, a: BusIdx, b: BusIdx) -> BusIdx {
        let (mut a, mut b) = (a, b);
        while self.node(a).depth > self.node(b).depth {
            a = self.node(a).parent.expect("depth implies parent");
        }
        while self.node(b).depth > self.node(a).depth {
            b = self.node(b).parent.expect("depth implies parent");
        }
        while a != b {
            a = self.node(a).parent.expect("common top");
            b = self.node(b).parent.expect("common top");
        }
        a
    }

    /// `j` is `h` or an ancestor of `h`, and not the top bus.
    fn on_path(&self, j: BusIdx, h: BusIdx) -> bool {
        if j == self.top {
            return false;
        }
        let dj = self.node(j).depth;
        let mut b = h;
        while self.node(b).depth > dj {
            b = self.node(b).parent.expect("depth implies parent");
        }
        b == j
    }

    fn sum(&self, kind: InjectionKind, a: BusIdx, b: BusIdx, phi: Phase, varphi: Phase) -> f64 {
        let n = self.node(self.lca(a, b));
        match kind {
            InjectionKind::P => n.r[phi.index()][varphi.index()],
            InjectionKind::Q => n.x[phi.index()][varphi.index()],
        }
    }
}

fn local_factors(
    lossless: &LocalTerms,
    report: &BusReport,
    z: &PhaseMatrix,
) -> Result<LocalTerms, SolverError> {
    match &report.state {
        None => Ok(*lossless),
        Some(st) => Ok(lossless.with_losses(z, st.v_parent, &st.ell, &st.s)?),
    }
}

/// Sensitivity-weighted dual sum of reports at a target `(h, ϕ)` known to
/// `tree`. Returns `(α, β)` contributions.
fn report_sum(
    tree: &LocalTree,
    factors: &[(BusIdx, PhaseSet, LocalTerms, [f64; 3])],
    h: BusIdx,
    varphi: Phase,
) -> (f64, f64) {
    let (mut a, mut b) = (0.0, 0.0);
    for (j, phases, t, dmu) in factors {
        let on_path = tree.on_path(*j, h);
        for phi in phases.iter() {
            let m = dmu[phi.index()];
            if m == 0.0 {
                continue;
            }
            let rp = tree.sum(InjectionKind::P, t.parent, h, phi, varphi);
            let rq = tree.sum(InjectionKind::Q, t.parent, h, phi, varphi);
            a += t.entry(InjectionKind::P, phi, varphi, rp, on_path) * m;
            b += t.entry(InjectionKind::Q, phi, varphi, rq, on_path) * m;
        }
    }
    (a, b)
}

#[derive(Clone, Debug)]
struct RegionalController {
    index: usize,
    root: BusIdx,
    members: Vec<BusIdx>,
    controllable: Vec<BusIdx>,
    tree: LocalTree,
    lossless: HashMap<BusIdx, LocalTerms>,
}

impl RegionalController {
    fn aggregate_and_factors(
        &self,
        network: &RadialNetwork,
        reports: &[BusReport],
    ) -> Result<(RcAggregate, Vec<(BusIdx, PhaseSet, LocalTerms, [f64; 3])>), SolverError> {
        let mut weighted = [0.0; 3];
        let mut factors = Vec::with_capacity(reports.len());
        for r in reports {
            let lossless = self.lossless.get(&r.bus).ok_or_else(|| {
                SolverError::InternalProtocol(format!(
                    "RC {} received a report from foreign bus {}",
                    self.index,
                    network.bus(r.bus).id
                ))
            })?;
            let z = &network.line(network.parent_line(r.bus).expect("member")).z;
            let t = local_factors(lossless, r, z)?;
            let phases = network.phases(r.bus);
            for phi in phases.iter() {
                weighted[phi.index()] += t.w[phi.index()] * r.dmu[phi.index()];
            }
            factors.push((r.bus, phases, t, r.dmu));
        }
        Ok((
            RcAggregate {
                subtree: self.index,
                weighted,
            },
            factors,
        ))
    }
}

#[derive(Clone, Debug)]
struct CentralCoordinator {
    tree: LocalTree,
    roots: Vec<BusIdx>,
    unclustered: Vec<BusIdx>,
    controllable: Vec<BusIdx>,
    lossless: HashMap<BusIdx, LocalTerms>,
}

/// Static state of all controllers for one clustered network.
#[derive(Clone, Debug)]
pub struct HierarchicalEngine {
    rcs: Vec<RegionalController>,
    cc: CentralCoordinator,
    /// Owner of each bus: `Some(k)` for subtree `k`, `None` for the CC.
    owner: Vec<Option<usize>>,
    network_phases: PhaseSet,
}

impl HierarchicalEngine {
    pub fn new(network: &RadialNetwork, clustering: &Clustering) -> Result<Self, SolverError> {
        let report = validate_clustering(network, clustering);
        if !report.is_valid() {
            let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(SolverError::InternalProtocol(format!(
                "invalid clustering: {}",
                msgs.join("; ")
            )));
        }
        let sums = PathSums::new(network);
        let topo_pos: HashMap<BusIdx, usize> = network
            .topo_order()
            .iter()
            .enumerate()
            .map(|(k, &b)| (b, k))
            .collect();
        let sorted = |v: &[BusIdx]| {
            let mut v = v.to_vec();
            v.sort_by_key(|b| topo_pos[b]);
            v
        };
        let controllable = |v: &[BusIdx]| -> Vec<BusIdx> {
            v.iter().copied().filter(|&b| network.bus(b).controllable).collect()
        };
        let path_sums = |b: BusIdx| {
            let mut r = [[0.0; 3]; 3];
            let mut x = [[0.0; 3]; 3];
            for phi in Phase::ALL {
                for varphi in Phase::ALL {
                    r[phi.index()][varphi.index()] = sums.r_path(b, phi, varphi);
                    x[phi.index()][varphi.index()] = sums.x_path(b, phi, varphi);
                }
            }
            (r, x)
        };

        let mut owner = vec![None; network.num_buses()];
        let mut rcs = Vec::with_capacity(clustering.subtrees.len());
        for (k, s) in clustering.subtrees.iter().enumerate() {
            let members = sorted(&s.members);
            for &b in &members {
                owner[b] = Some(k);
            }
            let top = network.parent_bus(s.root).expect("subtree root is not the slack");
            rcs.push(RegionalController {
                index: k,
                root: s.root,
                tree: LocalTree::build(network, top, path_sums(top), &members),
                controllable: controllable(&members),
                lossless: members
                    .iter()
                    .map(|&b| (b, LocalTerms::lossless(network, b)))
                    .collect(),
                members,
            });
        }

        let unclustered = sorted(&clustering.unclustered);
        let roots: Vec<BusIdx> = rcs.iter().map(|rc| rc.root).collect();
        let mut reduced: Vec<BusIdx> = unclustered.iter().chain(&roots).copied().collect();
        reduced = sorted(&reduced);
        let slack = network.slack_idx();
        let cc = CentralCoordinator {
            tree: LocalTree::build(network, slack, ([[0.0; 3]; 3], [[0.0; 3]; 3]), &reduced),
            roots,
            controllable: controllable(&unclustered),
            lossless: unclustered
                .iter()
                .map(|&b| (b, LocalTerms::lossless(network, b)))
                .collect(),
            unclustered,
        };
        Ok(HierarchicalEngine {
            rcs,
            cc,
            owner,
            network_phases: network.network_phases(),
        })
    }

    pub fn num_subtrees(&self) -> usize {
        self.rcs.len()
    }

    fn bus_report(
        network: &RadialNetwork,
        state: &PowerFlowState,
        net: &[f64],
        b: BusIdx,
        mode: GradientMode,
        skip: bool,
        channel: &mut ChannelCount,
    ) -> Option<BusReport> {
        let phases = network.phases(b);
        let mut dmu = [0.0; 3];
        for p in phases.iter() {
            dmu[p.index()] = net[network.node(b, p).expect("energized phase")];
        }
        if skip && dmu.iter().all(|&m| m == 0.0) {
            return None;
        }
        let n = phases.len();
        let mut scalars = n;
        let st = match mode {
            GradientMode::Linear => None,
            GradientMode::Improved => {
                let l = network.parent_line(b).expect("non-slack bus");
                let (i, _) = network.ends(l);
                let mut v_parent = [0.0; 3];
                for p in phases.iter() {
                    v_parent[p.index()] = state.v[i].get(p, p).re;
                }
                scalars += n + 2 * n * n;
                Some(LineStateReport {
                    v_parent,
                    ell: state.ell[l],
                    s: state.s[l],
                })
            }
        };
        channel.add(scalars);
        Some(BusReport {
            bus: b,
            dmu,
            state: st,
        })
    }

    fn cc_factors(
        &self,
        network: &RadialNetwork,
        reports: &[BusReport],
    ) -> Result<Vec<(BusIdx, PhaseSet, LocalTerms, [f64; 3])>, SolverError> {
        let mut out = Vec::with_capacity(reports.len());
        for r in reports {
            let lossless = self.cc.lossless.get(&r.bus).ok_or_else(|| {
                SolverError::InternalProtocol(format!("CC received a report from clustered bus {}", r.bus))
            })?;
            let z = &network.line(network.parent_line(r.bus).expect("non-slack")).z;
            out.push((r.bus, network.phases(r.bus), local_factors(lossless, r, z)?, r.dmu));
        }
        Ok(out)
    }

    /// Orders uploads by subtree, failing if any RC is silent.
    fn ordered_uploads<'a>(&self, aggregates: &'a [RcAggregate]) -> Result<Vec<&'a RcAggregate>, SolverError> {
        let mut uploads: Vec<Option<&RcAggregate>> = vec![None; self.rcs.len()];
        for a in aggregates {
            if a.subtree >= self.rcs.len() {
                return Err(SolverError::InternalProtocol(format!("upload from unknown RC {}", a.subtree)));
            }
            uploads[a.subtree] = Some(a);
        }
        uploads
            .into_iter()
            .enumerate()
            .map(|(k, u)| u.ok_or(SolverError::MissingUpload(k)))
            .collect()
    }

    /// Cross-subtree part at `target` on the reduced tree, skipping `skip_k`.
    fn cross(&self, uploads: &[&RcAggregate], target: BusIdx, skip_k: Option<usize>, varphi: Phase) -> (f64, f64) {
        let (mut a, mut b) = (0.0, 0.0);
        for (k2, up) in uploads.iter().enumerate() {
            if Some(k2) == skip_k {
                continue;
            }
            let root2 = self.cc.roots[k2];
            for phi in self.network_phases.iter() {
                let m = up.weighted[phi.index()];
                a += self.cc.tree.sum(InjectionKind::P, target, root2, phi, varphi) * m;
                b += self.cc.tree.sum(InjectionKind::Q, target, root2, phi, varphi) * m;
            }
        }
        (a, b)
    }

    fn rc(&self, k: usize) -> Result<&RegionalController, SolverError> {
        self.rcs
            .get(k)
            .ok_or_else(|| SolverError::InternalProtocol(format!("no regional controller {k}")))
    }

    fn rc_inbox(
        &self,
        network: &RadialNetwork,
        state: &PowerFlowState,
        net: &[f64],
        k: usize,
        mode: GradientMode,
        skip: bool,
        channel: &mut ChannelCount,
    ) -> Vec<BusReport> {
        self.rcs[k]
            .members
            .iter()
            .filter_map(|&b| Self::bus_report(network, state, net, b, mode, skip, channel))
            .collect()
    }

    fn cc_inbox(
        &self,
        network: &RadialNetwork,
        state: &PowerFlowState,
        net: &[f64],
        mode: GradientMode,
        skip: bool,
        channel: &mut ChannelCount,
    ) -> Vec<BusReport> {
        self.cc
            .unclustered
            .iter()
            .filter_map(|&b| Self::bus_report(network, state, net, b, mode, skip, channel))
            .collect()
    }

    /// Weighted dual sums RC `k` would upload for the given state and duals.
    pub fn rc_aggregate_upload(
        &self,
        network: &RadialNetwork,
        state: &PowerFlowState,
        duals: &Duals,
        mode: GradientMode,
        k: usize,
    ) -> Result<RcAggregate, SolverError> {
        let rc = self.rc(k)?;
        let inbox = self.rc_inbox(network, state, &duals.net(), k, mode, false, &mut ChannelCount::default());
        Ok(rc.aggregate_and_factors(network, &inbox)?.0)
    }

    /// In-subtree part of the coupling at `(h, varphi)`, as computed by RC `k`.
    pub fn rc_subtree_term(
        &self,
        network: &RadialNetwork,
        state: &PowerFlowState,
        duals: &Duals,
        mode: GradientMode,
        k: usize,
        h: BusIdx,
        varphi: Phase,
    ) -> Result<(f64, f64), SolverError> {
        let rc = self.rc(k)?;
        if self.owner.get(h).copied().flatten() != Some(k) {
            return Err(SolverError::TargetNotInSubtree { subtree: k, bus: h });
        }
        let inbox = self.rc_inbox(network, state, &duals.net(), k, mode, false, &mut ChannelCount::default());
        let (_, factors) = rc.aggregate_and_factors(network, &inbox)?;
        Ok(report_sum(&rc.tree, &factors, h, varphi))
    }

    /// Contribution the CC computes for `target`: every other subtree through
    /// its upload, plus the unclustered buses. For a subtree this is the
    /// value dispatched to its RC at the root phase `varphi`.
    pub fn cc_combine(
        &self,
        network: &RadialNetwork,
        state: &PowerFlowState,
        duals: &Duals,
        mode: GradientMode,
        uploads: &[RcAggregate],
        target: CombineTarget,
        varphi: Phase,
    ) -> Result<(f64, f64), SolverError> {
        let uploads = self.ordered_uploads(uploads)?;
        let inbox = self.cc_inbox(network, state, &duals.net(), mode, false, &mut ChannelCount::default());
        let factors = self.cc_factors(network, &inbox)?;
        let (at, skip_k) = match target {
            CombineTarget::Subtree(k) => (self.rc(k)?.root, Some(k)),
            CombineTarget::Unclustered(h) => {
                if !self.cc.lossless.contains_key(&h) {
                    return Err(SolverError::InternalProtocol(format!("bus {h} is not unclustered")));
                }
                (h, None)
            }
        };
        let (a1, b1) = self.cross(&uploads, at, skip_k, varphi);
        let (a2, b2) = report_sum(&self.cc.tree, &factors, at, varphi);
        Ok((a1 + a2, b1 + b2))
    }

    pub fn compute(
        &self,
        network: &RadialNetwork,
        state: &PowerFlowState,
        duals: &Duals,
        mode: GradientMode,
        skip_zero_duals: bool,
    ) -> Result<(Coupling, IterationMessages), SolverError> {
        let net = duals.net();
        let mut msgs = IterationMessages::default();

        // Step 1: bus uploads.
        let rc_inbox: Vec<Vec<BusReport>> = (0..self.rcs.len())
            .map(|k| self.rc_inbox(network, state, &net, k, mode, skip_zero_duals, &mut msgs.bus_to_rc))
            .collect();
        let cc_inbox = self.cc_inbox(network, state, &net, mode, skip_zero_duals, &mut msgs.bus_to_cc);

        // Step 2: RC aggregates.
        let mut aggregates = Vec::with_capacity(self.rcs.len());
        let mut rc_factors = Vec::with_capacity(self.rcs.len());
        for (rc, inbox) in self.rcs.iter().zip(&rc_inbox) {
            let (agg, factors) = rc.aggregate_and_factors(network, inbox)?;
            msgs.rc_to_cc.add(self.network_phases.len());
            aggregates.push(agg);
            rc_factors.push(factors);
        }

        // Step 3: CC combination.
        let cc_factors = self.cc_factors(network, &cc_inbox)?;
        let uploads = self.ordered_uploads(&aggregates)?;

        let mut dispatches = Vec::with_capacity(self.rcs.len());
        for (k, rc) in self.rcs.iter().enumerate() {
            let mut d = CcDispatch {
                subtree: k,
                alpha: [0.0; 3],
                beta: [0.0; 3],
            };
            let root_phases = network.phases(rc.root);
            for varphi in root_phases.iter() {
                let (a2, b2) = self.cross(&uploads, rc.root, Some(k), varphi);
                let (a3, b3) = report_sum(&self.cc.tree, &cc_factors, rc.root, varphi);
                d.alpha[varphi.index()] = a2 + a3;
                d.beta[varphi.index()] = b2 + b3;
            }
            msgs.cc_to_rc.add(2 * root_phases.len());
            dispatches.push(d);
        }

        let mut coupling = Coupling::empty(network.nodes().len());
        for &h in &self.cc.controllable {
            let mut g = GradientDelivery {
                bus: h,
                alpha: [0.0; 3],
                beta: [0.0; 3],
            };
            let phases = network.phases(h);
            for varphi in phases.iter() {
                let (a0, b0) = report_sum(&self.cc.tree, &cc_factors, h, varphi);
                let (ak, bk) = self.cross(&uploads, h, None, varphi);
                g.alpha[varphi.index()] = a0 + ak;
                g.beta[varphi.index()] = b0 + bk;
            }
            msgs.cc_to_bus.add(2 * phases.len());
            deliver(network, &mut coupling, &g);
        }

        // Step 4: RC dispatch.
        for ((rc, factors), d) in self.rcs.iter().zip(&rc_factors).zip(&dispatches) {
            for &h in &rc.controllable {
                let mut g = GradientDelivery {
                    bus: h,
                    alpha: [0.0; 3],
                    beta: [0.0; 3],
                };
                let phases = network.phases(h);
                for varphi in phases.iter() {
                    let (a1, b1) = report_sum(&rc.tree, factors, h, varphi);
                    g.alpha[varphi.index()] = a1 + d.alpha[varphi.index()];
                    g.beta[varphi.index()] = b1 + d.beta[varphi.index()];
                }
                msgs.rc_to_bus.add(2 * phases.len());
                deliver(network, &mut coupling, &g);
            }
        }
        Ok((coupling, msgs))
    }
}

fn deliver(network: &RadialNetwork, coupling: &mut Coupling, g: &GradientDelivery) {
    for p in network.phases(g.bus).iter() {
        let k = network.node(g.bus, p).expect("energized phase");
        coupling.set(k, g.alpha[p.index()], g.beta[p.index()]);
    }
}
