use super::{GradientTable, GradientTag};
use crate::network::{BusIdx, RadialNetwork};
use crate::phase::{rotation, Phase};

/// Root-to-bus cumulative sums of `2Re(z̄^{φϕ} α^{φ−ϕ})` and
/// `−2Im(z̄^{φϕ} α^{φ−ϕ})`. Entries absent from a line contribute zero.
#[derive(Clone, Debug)]
pub struct PathSums {
    r: Vec<[[f64; 3]; 3]>,
    x: Vec<[[f64; 3]; 3]>,
}

impl PathSums {
    pub fn new(network: &RadialNetwork) -> Self {
        let n = network.num_buses();
        let mut r = vec![[[0.0; 3]; 3]; n];
        let mut x = vec![[[0.0; 3]; 3]; n];
        for &b in network.topo_order() {
            let Some(l) = network.parent_line(b) else {
                continue;
            };
            let line = network.line(l);
            let (i, _) = network.ends(l);
            let (mut rb, mut xb) = (r[i], x[i]);
            for (phi, varphi, z) in line.z.entries() {
                let t = z.conj() * rotation(phi, varphi);
                rb[phi.index()][varphi.index()] += 2.0 * t.re;
                xb[phi.index()][varphi.index()] -= 2.0 * t.im;
            }
            r[b] = rb;
            x[b] = xb;
        }
        PathSums { r, x }
    }

    /// Sum over the root path of a single bus.
    pub fn r_path(&self, b: BusIdx, phi: Phase, varphi: Phase) -> f64 {
        self.r[b][phi.index()][varphi.index()]
    }

    pub fn x_path(&self, b: BusIdx, phi: Phase, varphi: Phase) -> f64 {
        self.x[b][phi.index()][varphi.index()]
    }

    /// `R_{jh}^{φϕ}` over the common path of `j` and `h`.
    pub fn r(&self, network: &RadialNetwork, j: BusIdx, h: BusIdx, phi: Phase, varphi: Phase) -> f64 {
        let a = network.lowest_common_ancestor(j, h).expect("valid buses");
        self.r_path(a, phi, varphi)
    }

    pub fn x(&self, network: &RadialNetwork, j: BusIdx, h: BusIdx, phi: Phase, varphi: Phase) -> f64 {
        let a = network.lowest_common_ancestor(j, h).expect("valid buses");
        self.x_path(a, phi, varphi)
    }
}

/// `R`/`X` for every (observed, actuated) node pair; independent of state.
pub fn linear_gradients(network: &RadialNetwork) -> GradientTable {
    let sums = PathSums::new(network);
    let mut t = GradientTable::all_nodes(network, GradientTag::Linear);
    let nodes = network.nodes();
    for (a, oj) in nodes.iter().enumerate() {
        for (c, oh) in nodes.iter().enumerate() {
            let lca = network.lowest_common_ancestor(oj.bus, oh.bus).expect("valid buses");
            t.dv_dp[(a, c)] = sums.r_path(lca, oj.phase, oh.phase);
            t.dv_dq[(a, c)] = sums.x_path(lca, oj.phase, oh.phase);
        }
    }
    t
}
