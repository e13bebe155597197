use super::hierarchy::{HierarchicalEngine, IterationMessages};
use super::{Duals, ExecutionMode, SolverConfig, SolverError};
use crate::cluster::Clustering;
use crate::gradient::{improved_gradients, linear_gradients, GradientMode, GradientTable};
use crate::network::{NodeIdx, RadialNetwork};
use crate::powerflow::PowerFlowState;

/// `(α_h^ϕ, β_h^ϕ)` per node; present for every controllable node.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    entries: Vec<Option<(f64, f64)>>,
}

impl Coupling {
    pub fn empty(n: usize) -> Self {
        Coupling {
            entries: vec![None; n],
        }
    }

    pub fn zeros_for(network: &RadialNetwork) -> Self {
        let mut c = Coupling::empty(network.nodes().len());
        for k in network.control_nodes() {
            c.set(k, 0.0, 0.0);
        }
        c
    }

    pub fn set(&mut self, k: NodeIdx, alpha: f64, beta: f64) {
        self.entries[k] = Some((alpha, beta));
    }

    pub fn get(&self, k: NodeIdx) -> Option<(f64, f64)> {
        self.entries[k]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest absolute difference over entries present in both.
    pub fn max_abs_diff(&self, other: &Coupling) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?)))
            .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()))
            .fold(0.0, f64::max)
    }
}

/// Dense reference: `α_h = Σ_j ∂v_j/∂p_h (μ̄_j − μ̲_j)` from a full table.
pub fn coupling_centralized(
    network: &RadialNetwork,
    state: &PowerFlowState,
    duals: &Duals,
    mode: GradientMode,
) -> Result<Coupling, SolverError> {
    let table = match mode {
        GradientMode::Linear => linear_gradients(network),
        GradientMode::Improved => improved_gradients(network, state)?,
    };
    Ok(contract(network, &table, duals))
}

fn contract(network: &RadialNetwork, table: &GradientTable, duals: &Duals) -> Coupling {
    let net = duals.net();
    let mut c = Coupling::empty(network.nodes().len());
    for h in network.control_nodes() {
        let mut a = 0.0;
        let mut b = 0.0;
        for (row, &j) in table.observed.iter().enumerate() {
            a += table.dv_dp[(row, h)] * net[j];
            b += table.dv_dq[(row, h)] * net[j];
        }
        c.set(h, a, b);
    }
    c
}

/// Coupling computation for one execution mode, holding its static data.
#[derive(Clone, Debug)]
pub enum CouplingEngine {
    Centralized { linear: GradientTable },
    Hierarchical(Box<HierarchicalEngine>),
}

impl CouplingEngine {
    pub fn new(
        network: &RadialNetwork,
        clustering: &Clustering,
        config: &SolverConfig,
    ) -> Result<Self, SolverError> {
        Ok(match config.execution {
            ExecutionMode::Centralized => CouplingEngine::Centralized {
                linear: linear_gradients(network),
            },
            ExecutionMode::Hierarchical => {
                CouplingEngine::Hierarchical(Box::new(HierarchicalEngine::new(network, clustering)?))
            }
        })
    }

    pub fn compute(
        &self,
        network: &RadialNetwork,
        state: &PowerFlowState,
        duals: &Duals,
        config: &SolverConfig,
    ) -> Result<(Coupling, IterationMessages), SolverError> {
        match self {
            CouplingEngine::Centralized { linear } => {
                let c = match config.gradient_mode {
                    GradientMode::Linear => contract(network, linear, duals),
                    GradientMode::Improved => {
                        contract(network, &improved_gradients(network, state)?, duals)
                    }
                };
                Ok((c, IterationMessages::default()))
            }
            CouplingEngine::Hierarchical(h) => {
                h.compute(network, state, duals, config.gradient_mode, config.skip_zero_duals)
            }
        }
    }
}
