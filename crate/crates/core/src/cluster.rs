//! Subtree clustering and its validity conditions.

use std::fmt;

use crate::network::{BusIdx, RadialNetwork};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subtree {
    pub root: BusIdx,
    pub members: Vec<BusIdx>,
}

/// Partition of the non-slack buses into subtrees and an unclustered set.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Clustering {
    pub subtrees: Vec<Subtree>,
    pub unclustered: Vec<BusIdx>,
}

/// Where a bus sits in a clustering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Subtree(usize),
    Unclustered,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClusterViolation {
    UnknownBus(BusIdx),
    SlackAssigned(BusIdx),
    /// A bus belongs to more than one subtree.
    Overlap { bus: BusIdx, subtrees: Vec<usize> },
    /// A bus is listed both in a subtree and as unclustered, or twice.
    DuplicateAssignment(BusIdx),
    Unassigned(BusIdx),
    RootNotMember { subtree: usize, root: BusIdx },
    /// A member whose parent lies outside its subtree, other than the root,
    /// or a root whose parent lies inside.
    NotConnected { subtree: usize, bus: BusIdx },
    /// The root path of a subtree root or unclustered bus passes through a
    /// bus of another subtree.
    PathCrossesSubtree { bus: BusIdx, crossed: BusIdx, subtree: usize },
}

impl fmt::Display for ClusterViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterViolation::UnknownBus(b) => write!(f, "unknown bus index {b}"),
            ClusterViolation::SlackAssigned(b) => write!(f, "slack bus {b} must not be clustered"),
            ClusterViolation::Overlap { bus, subtrees } => {
                write!(f, "non-overlap violated: bus {bus} in subtrees {subtrees:?}")
            }
            ClusterViolation::DuplicateAssignment(b) => write!(f, "bus {b} assigned more than once"),
            ClusterViolation::Unassigned(b) => write!(f, "bus {b} not assigned"),
            ClusterViolation::RootNotMember { subtree, root } => {
                write!(f, "subtree {subtree}: root {root} not among its members")
            }
            ClusterViolation::NotConnected { subtree, bus } => {
                write!(f, "subtree {subtree}: bus {bus} breaks connectivity at the root")
            }
            ClusterViolation::PathCrossesSubtree {
                bus,
                crossed,
                subtree,
            } => write!(
                f,
                "root path of bus {bus} crosses bus {crossed} of subtree {subtree}"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClusterReport {
    pub violations: Vec<ClusterViolation>,
}

impl ClusterReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Clustering {
    /// Everything unclustered.
    pub fn flat(network: &RadialNetwork) -> Self {
        Clustering {
            subtrees: Vec::new(),
            unclustered: network
                .topo_order()
                .iter()
                .copied()
                .filter(|&b| b != network.slack_idx())
                .collect(),
        }
    }

    /// Membership per bus index, `None` for the slack bus. Assumes a
    /// valid clustering.
    pub fn membership(&self, network: &RadialNetwork) -> Vec<Option<Membership>> {
        let mut m = vec![None; network.num_buses()];
        for &b in &self.unclustered {
            m[b] = Some(Membership::Unclustered);
        }
        for (k, s) in self.subtrees.iter().enumerate() {
            for &b in &s.members {
                m[b] = Some(Membership::Subtree(k));
            }
        }
        m
    }
}

pub fn validate_clustering(network: &RadialNetwork, clustering: &Clustering) -> ClusterReport {
    let n = network.num_buses();
    let slack = network.slack_idx();
    let mut violations = Vec::new();
    let mut in_subtrees: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut unclustered_count = vec![0usize; n];

    for (k, s) in clustering.subtrees.iter().enumerate() {
        for &b in &s.members {
            if b >= n {
                violations.push(ClusterViolation::UnknownBus(b));
            } else if !in_subtrees[b].contains(&k) {
                in_subtrees[b].push(k);
            } else {
                violations.push(ClusterViolation::DuplicateAssignment(b));
            }
        }
        if s.root >= n {
            violations.push(ClusterViolation::UnknownBus(s.root));
        } else if !s.members.contains(&s.root) {
            violations.push(ClusterViolation::RootNotMember {
                subtree: k,
                root: s.root,
            });
        }
    }
    for &b in &clustering.unclustered {
        if b >= n {
            violations.push(ClusterViolation::UnknownBus(b));
        } else {
            unclustered_count[b] += 1;
        }
    }
    if violations.iter().any(|v| matches!(v, ClusterViolation::UnknownBus(_))) {
        return ClusterReport { violations };
    }

    for b in 0..n {
        let assigned = in_subtrees[b].len() + unclustered_count[b];
        if b == slack {
            if assigned > 0 {
                violations.push(ClusterViolation::SlackAssigned(b));
            }
            continue;
        }
        if in_subtrees[b].len() > 1 {
            violations.push(ClusterViolation::Overlap {
                bus: b,
                subtrees: in_subtrees[b].clone(),
            });
        } else if assigned > 1 {
            violations.push(ClusterViolation::DuplicateAssignment(b));
        } else if assigned == 0 {
            violations.push(ClusterViolation::Unassigned(b));
        }
    }

    for (k, s) in clustering.subtrees.iter().enumerate() {
        for &b in &s.members {
            let parent_inside = network
                .parent_bus(b)
                .is_some_and(|p| in_subtrees[p].contains(&k));
            let ok = if b == s.root { !parent_inside } else { parent_inside };
            if !ok {
                violations.push(ClusterViolation::NotConnected { subtree: k, bus: b });
            }
        }
    }

    let mut anchors: Vec<BusIdx> = clustering
        .subtrees
        .iter()
        .map(|s| s.root)
        .chain(clustering.unclustered.iter().copied())
        .collect();
    anchors.sort_unstable();
    anchors.dedup();
    for b in anchors {
        if b == slack {
            continue;
        }
        let mut x = network.parent_bus(b);
        while let Some(a) = x {
            if a == slack {
                break;
            }
            if let Some(&k) = in_subtrees[a].first() {
                violations.push(ClusterViolation::PathCrossesSubtree {
                    bus: b,
                    crossed: a,
                    subtree: k,
                });
                break;
            }
            x = network.parent_bus(a);
        }
    }

    ClusterReport { violations }
}
