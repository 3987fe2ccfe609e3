use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::graph::{GraphKind, GraphTopology, Vertex};

/// Translation-invariant exogenous arrival law: each node receives
/// customers at total rate `sum(rates)`, and a customer arriving at base
/// vertex `v` gets destination `v + offset` with probability proportional
/// to the offset's rate. Offsets are `(dx, 0)` on cycles, `(dx, dy)` on tori
/// and only `(0, 0)` on general graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalLaw {
    pub offsets: Vec<((i64, i64), f64)>,
}

impl ArrivalLaw {
    /// Destination equals the arrival node.
    pub fn same_node(lambda: f64) -> Self {
        Self { offsets: vec![((0, 0), lambda)] }
    }

    pub fn total_rate(&self) -> f64 {
        self.offsets.iter().map(|(_, r)| r).sum()
    }

    pub(crate) fn validate(&self, graph: &GraphTopology) -> Result<(), SimError> {
        if self.offsets.is_empty() {
            return Err(SimError::InvalidArrivalLaw("no offsets given".into()));
        }
        for &(offset, rate) in &self.offsets {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(SimError::InvalidArrivalLaw(format!("rate {rate} for offset {offset:?}")));
            }
            let ok = match graph.kind() {
                GraphKind::Cycle { .. } => offset.1 == 0,
                GraphKind::Torus { .. } => true,
                GraphKind::General => offset == (0, 0),
            };
            if !ok {
                return Err(SimError::InvalidArrivalLaw(format!(
                    "offset {offset:?} not meaningful on {}",
                    graph.kind()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn sample_destination<R: Rng + ?Sized>(
        &self,
        graph: &GraphTopology,
        base: Vertex,
        total: f64,
        rng: &mut R,
    ) -> Vertex {
        let offset = if self.offsets.len() == 1 {
            self.offsets[0].0
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = self.offsets[self.offsets.len() - 1].0;
            for &(o, r) in &self.offsets {
                if u < r {
                    chosen = o;
                    break;
                }
                u -= r;
            }
            chosen
        };
        graph.translate(base, offset).expect("offset validated against graph kind")
    }
}

/// How the swap rate is split in the N-replica network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapNormalization {
    /// Every replica pair `(u, a)`, `(v, b)` across a base edge swaps at
    /// rate `beta / N`; each server then swaps at total rate `beta * deg`.
    #[default]
    PerPair,
    /// The N^2 pairs across a base edge share total rate `beta`.
    PerEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Time(f64),
    Events(u64),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub topology: Arc<GraphTopology>,
    pub arrivals: ArrivalLaw,
    /// Swap rate per base edge (see [`SwapNormalization`]).
    pub beta: f64,
    pub replicas: usize,
    pub swap_normalization: SwapNormalization,
    pub seed: u64,
    pub horizon: Horizon,
    /// Spacing of queue-length snapshots in the recorded trajectory.
    pub record_interval: f64,
    /// Keep every event (needed for embedded-chain samples and audits).
    pub record_events: bool,
    /// Keep a record per departed customer.
    pub record_customers: bool,
}

impl SimConfig {
    /// Plain network (N = 1), destination = arrival node, horizon 100 time
    /// units, snapshots every unit of time.
    pub fn new(topology: GraphTopology, lambda: f64, beta: f64) -> Self {
        Self {
            topology: Arc::new(topology),
            arrivals: ArrivalLaw::same_node(lambda),
            beta,
            replicas: 1,
            swap_normalization: SwapNormalization::PerPair,
            seed: 0,
            horizon: Horizon::Time(100.0),
            record_interval: 1.0,
            record_events: false,
            record_customers: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replicas(mut self, replicas: usize) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.arrivals.total_rate()
    }

    /// Nodes of the (replicated) network: `|V| * N`.
    pub fn node_count(&self) -> usize {
        self.topology.vertex_count() * self.replicas
    }

    /// Total swap rate summed over all replica pairs of all base edges.
    pub fn total_swap_rate(&self) -> f64 {
        let per_edge = match self.swap_normalization {
            SwapNormalization::PerPair => self.beta * self.replicas as f64,
            SwapNormalization::PerEdge => self.beta,
        };
        per_edge * self.topology.edge_count() as f64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(SimError::InvalidParameter(format!("beta must be >= 0 (got {})", self.beta)));
        }
        if self.replicas == 0 {
            return Err(SimError::InvalidParameter("replica count must be positive".into()));
        }
        match self.horizon {
            Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(SimError::NonPositiveHorizon);
            }
            Horizon::Events(0) => return Err(SimError::NonPositiveHorizon),
            _ => {}
        }
        if !(self.record_interval > 0.0) {
            return Err(SimError::InvalidParameter("record_interval must be positive".into()));
        }
        self.arrivals.validate(&self.topology)
    }
}
