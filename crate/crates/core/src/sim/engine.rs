//! Exact event-by-event simulation of the network CTMC.
//!
//! All clocks are exponential, so the next event is drawn from the
//! aggregate rate `lambda * nodes + busy servers + total swap rate` and its
//! kind and location are then chosen proportionally.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::state::{CustomerRecord, NetworkState};
use super::SimError;
use crate::graph::Vertex;
use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    /// Service completion after which the customer leaves the network.
    Exit,
    /// Service completion after which the customer joins a neighbor queue.
    Transit,
    Swap,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Exit => "exit",
            EventKind::Transit => "transit",
            EventKind::Swap => "swap",
        }
    }
}

/// One realized event. `node`/`server` locate it (the first endpoint for
/// swaps); `to_node`/`to_server` give the receiving queue of a transit or
/// the second endpoint of a swap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub node: usize,
    pub server: usize,
    pub customer: Option<CustomerRecord>,
    pub to_node: Option<usize>,
    pub to_server: Option<usize>,
}

impl Event {
    /// Destination of the customer involved, if any.
    pub fn destination(&self) -> Option<Vertex> {
        self.customer.map(|c| c.destination)
    }
}

#[derive(Debug, Clone)]
struct BusySet {
    members: Vec<usize>,
    slot: Vec<usize>,
}

impl BusySet {
    fn new(state: &NetworkState) -> Self {
        let mut set = Self { members: Vec::new(), slot: vec![usize::MAX; state.server_count()] };
        for (s, q) in state.queues.iter().enumerate() {
            if !q.is_empty() {
                set.insert(s);
            }
        }
        set
    }

    fn insert(&mut self, s: usize) {
        if self.slot[s] == usize::MAX {
            self.slot[s] = self.members.len();
            self.members.push(s);
        }
    }

    fn remove(&mut self, s: usize) {
        let i = self.slot[s];
        if i != usize::MAX {
            let last = *self.members.last().expect("non-empty");
            self.members.swap_remove(i);
            if last != s {
                self.slot[last] = i;
            }
            self.slot[s] = usize::MAX;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub arrival: u64,
    pub exit: u64,
    pub transit: u64,
    pub swap: u64,
}

impl EventCounts {
    pub fn total(&self) -> u64 {
        self.arrival + self.exit + self.transit + self.swap
    }

    fn bump(&mut self, kind: EventKind) {
        match kind {
            EventKind::Arrival => self.arrival += 1,
            EventKind::Exit => self.exit += 1,
            EventKind::Transit => self.transit += 1,
            EventKind::Swap => self.swap += 1,
        }
    }
}

pub struct Simulator<'a> {
    config: &'a SimConfig,
    state: NetworkState,
    rng: SimRng,
    busy: BusySet,
    edges: Vec<(Vertex, Vertex)>,
    lambda: f64,
    arrival_rate: f64,
    swap_rate: f64,
    counts: EventCounts,
    exited: u64,
    arrived: u64,
    initial_customers: u64,
}

impl<'a> Simulator<'a> {
    /// Simulator seeded from `config.seed`.
    pub fn new(config: &'a SimConfig, initial: NetworkState) -> Result<Self, SimError> {
        Self::with_rng(config, initial, rng_from_seed(config.seed))
    }

    pub fn with_rng(config: &'a SimConfig, initial: NetworkState, rng: SimRng) -> Result<Self, SimError> {
        config.validate()?;
        initial.check_against(&config.topology, config.replicas)?;
        let lambda = config.lambda();
        Ok(Self {
            busy: BusySet::new(&initial),
            edges: config.topology.edges(),
            arrival_rate: lambda * config.node_count() as f64,
            swap_rate: config.total_swap_rate(),
            lambda,
            initial_customers: initial.total_customers() as u64,
            state: initial,
            config,
            rng,
            counts: EventCounts::default(),
            exited: 0,
            arrived: 0,
        })
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn into_state(self) -> NetworkState {
        self.state
    }

    /// Replace the state in place (keeps the random stream).
    pub fn reset_state(&mut self, state: NetworkState) -> Result<(), SimError> {
        state.check_against(&self.config.topology, self.config.replicas)?;
        self.busy = BusySet::new(&state);
        self.initial_customers = state.total_customers() as u64;
        self.arrived = 0;
        self.exited = 0;
        self.state = state;
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.state.sim_time
    }

    pub fn counts(&self) -> EventCounts {
        self.counts
    }

    /// Customers that entered from outside since the start (or last reset).
    pub fn arrived(&self) -> u64 {
        self.arrived
    }

    pub fn exited(&self) -> u64 {
        self.exited
    }

    pub fn initial_customers(&self) -> u64 {
        self.initial_customers
    }

    pub fn busy_servers(&self) -> usize {
        self.busy.members.len()
    }

    /// Sum of all exponential clock rates in the current state.
    pub fn total_rate(&self) -> f64 {
        self.arrival_rate + self.busy.members.len() as f64 + self.swap_rate
    }

    /// Draw and apply one event. Returns `None` when every clock has rate
    /// zero (the process is frozen).
    pub fn step(&mut self) -> Option<Event> {
        let total = self.total_rate();
        if total <= 0.0 {
            return None;
        }
        let dt = -(1.0 - self.rng.random::<f64>()).ln() / total;
        self.state.sim_time += dt;
        let u = self.rng.random::<f64>() * total;
        let event = if u < self.arrival_rate {
            self.arrival()
        } else if u < self.arrival_rate + self.busy.members.len() as f64 {
            self.service()
        } else {
            self.swap()
        };
        self.counts.bump(event.kind);
        Some(event)
    }

    fn arrival(&mut self) -> Event {
        let cfg = self.config;
        let node = self.rng.random_range(0..cfg.node_count());
        let base = node / cfg.replicas;
        let dest = cfg
            .arrivals
            .sample_destination(&cfg.topology, base, self.lambda, &mut self.rng);
        let server = self.state.server_of_node[node];
        let now = self.state.sim_time;
        let id = self.state.next_customer_id;
        self.state.next_customer_id += 1;
        let customer = CustomerRecord {
            id,
            destination: dest,
            arrival_time: now,
            hops_so_far: 0,
            entry_position: self.state.queues[server].len() as u32,
            joined_at: now,
        };
        self.state.queues[server].push_back(customer);
        self.busy.insert(server);
        self.arrived += 1;
        Event {
            time: now,
            kind: EventKind::Arrival,
            node,
            server,
            customer: Some(customer),
            to_node: None,
            to_server: None,
        }
    }

    fn service(&mut self) -> Event {
        let cfg = self.config;
        let graph = &*cfg.topology;
        let idx = self.rng.random_range(0..self.busy.members.len());
        let server = self.busy.members[idx];
        let customer = self.state.queues[server].pop_front().expect("busy server has a customer");
        if self.state.queues[server].is_empty() {
            self.busy.remove(server);
        }
        let node = self.state.node_of_server[server];
        let here = node / cfg.replicas;
        let now = self.state.sim_time;
        if graph.exits_on_service(here, customer.destination) {
            self.exited += 1;
            return Event {
                time: now,
                kind: EventKind::Exit,
                node,
                server,
                customer: Some(customer),
                to_node: None,
                to_server: None,
            };
        }
        let hops: Vec<Vertex> = graph.next_hops_unchecked(here, customer.destination).collect();
        let next = if hops.len() == 1 { hops[0] } else { hops[self.rng.random_range(0..hops.len())] };
        let replica = if cfg.replicas == 1 { 0 } else { self.rng.random_range(0..cfg.replicas) };
        let to_node = next * cfg.replicas + replica;
        let to_server = self.state.server_of_node[to_node];
        let moved = CustomerRecord {
            hops_so_far: customer.hops_so_far + 1,
            entry_position: self.state.queues[to_server].len() as u32,
            joined_at: now,
            ..customer
        };
        self.state.queues[to_server].push_back(moved);
        self.busy.insert(to_server);
        Event {
            time: now,
            kind: EventKind::Transit,
            node,
            server,
            customer: Some(customer),
            to_node: Some(to_node),
            to_server: Some(to_server),
        }
    }

    fn swap(&mut self) -> Event {
        let n = self.config.replicas;
        let (u, v) = self.edges[self.rng.random_range(0..self.edges.len())];
        let (a, b) = if n == 1 {
            (0, 0)
        } else {
            (self.rng.random_range(0..n), self.rng.random_range(0..n))
        };
        let (x, y) = (u * n + a, v * n + b);
        let (sx, sy) = (self.state.server_of_node[x], self.state.server_of_node[y]);
        self.state.server_of_node.swap(x, y);
        self.state.node_of_server[sx] = y;
        self.state.node_of_server[sy] = x;
        Event {
            time: self.state.sim_time,
            kind: EventKind::Swap,
            node: x,
            server: sx,
            customer: None,
            to_node: Some(y),
            to_server: Some(sy),
        }
    }
}
