use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::graph::{GraphTopology, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub id: u64,
    /// Base-graph vertex the customer is routed to.
    pub destination: Vertex,
    /// Time the customer entered the network.
    pub arrival_time: f64,
    pub hops_so_far: u32,
    /// Number of customers ahead of it when it joined its current queue.
    pub entry_position: u32,
    /// Time it joined its current queue.
    pub joined_at: f64,
}

pub type QueueState = VecDeque<CustomerRecord>;

/// Positions and queues of the `|V| * N` servers. Node `(v, r)` of the
/// replicated graph has index `v * N + r`; queues are indexed by server and
/// move with it.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub(crate) server_of_node: Vec<usize>,
    pub(crate) node_of_server: Vec<usize>,
    pub(crate) queues: Vec<QueueState>,
    pub(crate) sim_time: f64,
    pub(crate) replicas: usize,
    pub(crate) next_customer_id: u64,
}

impl NetworkState {
    /// All queues empty, server `i` at node `i`.
    pub fn empty(graph: &GraphTopology, replicas: usize) -> Self {
        let n = graph.vertex_count() * replicas;
        Self {
            server_of_node: (0..n).collect(),
            node_of_server: (0..n).collect(),
            queues: vec![VecDeque::new(); n],
            sim_time: 0.0,
            replicas,
            next_customer_id: 0,
        }
    }

    /// Every queue holds `level` customers whose destination is the base
    /// vertex the server currently sits on.
    pub fn uniform_level(graph: &GraphTopology, replicas: usize, level: u32) -> Self {
        let mut state = Self::empty(graph, replicas);
        for server in 0..state.queues.len() {
            let dest = state.node_of_server[server] / replicas;
            for _ in 0..level {
                state.push_initial(server, dest);
            }
        }
        state
    }

    /// Queue lengths drawn i.i.d. geometric, `P(L = l) = (1 - eta) eta^l`,
    /// destinations at the current vertex.
    pub fn geometric<R: Rng + ?Sized>(
        graph: &GraphTopology,
        replicas: usize,
        eta: f64,
        rng: &mut R,
    ) -> Self {
        let mut state = Self::empty(graph, replicas);
        for server in 0..state.queues.len() {
            let dest = state.node_of_server[server] / replicas;
            while rng.random::<f64>() < eta {
                state.push_initial(server, dest);
            }
        }
        state
    }

    /// Give every queued customer an independent uniform destination.
    pub fn randomize_destinations<R: Rng + ?Sized>(&mut self, graph: &GraphTopology, rng: &mut R) {
        let k = graph.vertex_count();
        for q in &mut self.queues {
            for c in q.iter_mut() {
                c.destination = rng.random_range(0..k);
            }
        }
    }

    fn push_initial(&mut self, server: usize, dest: Vertex) {
        let position = self.queues[server].len() as u32;
        let id = self.next_customer_id;
        self.next_customer_id += 1;
        self.queues[server].push_back(CustomerRecord {
            id,
            destination: dest,
            arrival_time: 0.0,
            hops_so_far: 0,
            entry_position: position,
            joined_at: 0.0,
        });
    }

    pub fn server_count(&self) -> usize {
        self.queues.len()
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    pub fn server_at(&self, node: usize) -> usize {
        self.server_of_node[node]
    }

    pub fn node_of(&self, server: usize) -> usize {
        self.node_of_server[server]
    }

    /// Base-graph vertex currently hosting `server`.
    pub fn vertex_of(&self, server: usize) -> Vertex {
        self.node_of_server[server] / self.replicas
    }

    pub fn queue(&self, server: usize) -> &QueueState {
        &self.queues[server]
    }

    pub fn queue_lengths(&self) -> Vec<u32> {
        self.queues.iter().map(|q| q.len() as u32).collect()
    }

    pub fn total_customers(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn min_queue(&self) -> u32 {
        self.queues.iter().map(|q| q.len() as u32).min().unwrap_or(0)
    }

    /// `server_of_node` and `node_of_server` are mutually inverse.
    pub fn permutation_is_consistent(&self) -> bool {
        self.server_of_node.len() == self.node_of_server.len()
            && self
                .node_of_server
                .iter()
                .enumerate()
                .all(|(s, &n)| n < self.server_of_node.len() && self.server_of_node[n] == s)
    }

    pub(crate) fn check_against(&self, graph: &GraphTopology, replicas: usize) -> Result<(), SimError> {
        let n = graph.vertex_count() * replicas;
        if self.replicas != replicas || self.queues.len() != n || self.server_of_node.len() != n {
            return Err(SimError::InconsistentState(format!(
                "state has {} servers with N = {}, config expects {} with N = {}",
                self.queues.len(),
                self.replicas,
                n,
                replicas
            )));
        }
        if !self.permutation_is_consistent() {
            return Err(SimError::InconsistentState("server/node maps are not inverse bijections".into()));
        }
        if let Some(c) = self.queues.iter().flatten().find(|c| c.destination >= graph.vertex_count()) {
            return Err(SimError::InconsistentState(format!(
                "customer {} has destination {} outside the base graph",
                c.id, c.destination
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn constructors() {
        let g = GraphTopology::cycle(5).unwrap();
        let s = NetworkState::uniform_level(&g, 2, 3);
        assert_eq!(s.server_count(), 10);
        assert_eq!(s.total_customers(), 30);
        assert!(s.permutation_is_consistent());
        assert_eq!(s.queue(7).front().unwrap().destination, 3);
        assert_eq!(s.queue(7).back().unwrap().entry_position, 2);
        assert!(s.check_against(&g, 2).is_ok());
        assert!(s.check_against(&g, 1).is_err());

        let e = NetworkState::empty(&g, 1);
        assert_eq!(e.min_queue(), 0);

        let geo = NetworkState::geometric(&g, 40, 0.5, &mut rng_from_seed(4));
        let mean = geo.total_customers() as f64 / geo.server_count() as f64;
        assert!((mean - 1.0).abs() < 0.4, "mean {mean}");
    }
}
