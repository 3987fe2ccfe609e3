use serde::{Deserialize, Serialize};

use super::config::{Horizon, SimConfig};
use super::engine::{Event, EventCounts, EventKind, Simulator};
use super::state::NetworkState;
use super::SimError;
use crate::graph::Vertex;

/// A customer that left the network during the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletedCustomer {
    pub id: u64,
    pub destination: Vertex,
    pub arrival_time: f64,
    pub exit_time: f64,
    pub hops: u32,
    /// Distance between the exit vertex and the destination (0 or 1).
    pub exit_distance: u32,
}

impl CompletedCustomer {
    pub fn sojourn(&self) -> f64 {
        self.exit_time - self.arrival_time
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub sample_times: Vec<f64>,
    /// `queue_lengths[server][sample]`.
    pub queue_lengths: Vec<Vec<u32>>,
    pub event_counts: EventCounts,
    pub initial_lengths: Vec<u32>,
    pub final_time: f64,
    pub customers: Option<Vec<CompletedCustomer>>,
    pub events: Option<Vec<Event>>,
}

impl Trajectory {
    pub fn sample_count(&self) -> usize {
        self.sample_times.len()
    }

    /// Queue-length vector at sample `i`.
    pub fn snapshot(&self, i: usize) -> Vec<u32> {
        self.queue_lengths.iter().map(|q| q[i]).collect()
    }
}

/// Run the network from `initial` until the configured horizon, recording a
/// queue-length snapshot every `record_interval` time units (the first at
/// time 0) plus whatever optional logs the config asks for.
pub fn simulate(config: &SimConfig, initial: NetworkState) -> Result<Trajectory, SimError> {
    let initial_lengths = initial.queue_lengths();
    let servers = initial.server_count();
    let mut sim = Simulator::new(config, initial)?;

    let mut traj = Trajectory {
        sample_times: Vec::new(),
        queue_lengths: vec![Vec::new(); servers],
        event_counts: EventCounts::default(),
        initial_lengths,
        final_time: 0.0,
        customers: config.record_customers.then(Vec::new),
        events: config.record_events.then(Vec::new),
    };
    let mut next_sample = 0.0;
    // Records every pending snapshot time before `t` (up to and including
    // `t` when `inclusive`).
    let record_until = |traj: &mut Trajectory, next: &mut f64, t: f64, inclusive: bool, lengths: &[u32]| {
        while *next < t || (inclusive && *next == t) {
            traj.sample_times.push(*next);
            for (q, &l) in traj.queue_lengths.iter_mut().zip(lengths) {
                q.push(l);
            }
            *next = traj.sample_times.len() as f64 * config.record_interval;
        }
    };

    let (time_limit, event_limit) = match config.horizon {
        Horizon::Time(t) => (t, u64::MAX),
        Horizon::Events(n) => (f64::INFINITY, n),
    };
    let mut lengths = sim.state().queue_lengths();
    let mut processed = 0u64;
    while processed < event_limit {
        let before = sim.state().clone_lengths_into(&mut lengths);
        let Some(event) = sim.step() else {
            if time_limit.is_finite() {
                record_until(&mut traj, &mut next_sample, time_limit, true, before);
                traj.final_time = time_limit;
            } else {
                traj.final_time = sim.time();
            }
            break;
        };
        if event.time > time_limit {
            record_until(&mut traj, &mut next_sample, time_limit, true, before);
            traj.final_time = time_limit;
            break;
        }
        record_until(&mut traj, &mut next_sample, event.time, false, before);
        processed += 1;
        traj.event_counts = sim.counts();
        traj.final_time = event.time;
        if let (Some(log), EventKind::Exit) = (traj.customers.as_mut(), event.kind) {
            let c = event.customer.expect("exit carries its customer");
            let here = event.node / config.replicas;
            log.push(CompletedCustomer {
                id: c.id,
                destination: c.destination,
                arrival_time: c.arrival_time,
                exit_time: event.time,
                hops: c.hops_so_far,
                exit_distance: config.topology.distance(here, c.destination),
            });
        }
        if let Some(log) = traj.events.as_mut() {
            log.push(event);
        }
    }
    traj.event_counts = sim.counts();
    Ok(traj)
}

impl NetworkState {
    fn clone_lengths_into<'a>(&self, buf: &'a mut Vec<u32>) -> &'a [u32] {
        buf.clear();
        buf.extend(self.queues.iter().map(|q| q.len() as u32));
        buf
    }
}

/// Queue-length vectors after every `every`-th event (events `every`,
/// `2 * every`, ...), rebuilt from the event log.
pub fn embedded_chain_samples(traj: &Trajectory, every: usize) -> Result<Vec<Vec<u32>>, SimError> {
    if every == 0 {
        return Err(SimError::InvalidParameter("block length must be positive".into()));
    }
    let events = traj.events.as_ref().ok_or(SimError::NoEventLog)?;
    let mut lengths = traj.initial_lengths.clone();
    let mut out = Vec::with_capacity(events.len() / every);
    for (i, ev) in events.iter().enumerate() {
        match ev.kind {
            EventKind::Arrival => lengths[ev.server] += 1,
            EventKind::Exit => lengths[ev.server] -= 1,
            EventKind::Transit => {
                lengths[ev.server] -= 1;
                lengths[ev.to_server.expect("transit target")] += 1;
            }
            EventKind::Swap => {}
        }
        if (i + 1) % every == 0 {
            out.push(lengths.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphTopology;
    use std::collections::HashMap;

    fn cycle_config(k: usize, lambda: f64, beta: f64) -> SimConfig {
        SimConfig::new(GraphTopology::cycle(k).unwrap(), lambda, beta)
    }

    #[test]
    fn samples_are_regular_and_increasing() {
        let cfg = cycle_config(5, 0.5, 1.0).with_horizon(Horizon::Time(20.0));
        let g = cfg.topology.clone();
        let t = simulate(&cfg, NetworkState::empty(&g, 1)).unwrap();
        assert_eq!(t.sample_count(), 21);
        assert!(t.sample_times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(t.snapshot(0), vec![0; 5]);
    }

    #[test]
    fn rejects_bad_horizon_and_state() {
        let cfg = cycle_config(5, 0.5, 1.0).with_horizon(Horizon::Time(0.0));
        let g = cfg.topology.clone();
        assert_eq!(simulate(&cfg, NetworkState::empty(&g, 1)).unwrap_err(), SimError::NonPositiveHorizon);
        let cfg = cycle_config(5, 0.5, 1.0);
        let other = GraphTopology::cycle(7).unwrap();
        assert!(matches!(
            simulate(&cfg, NetworkState::empty(&other, 1)),
            Err(SimError::InconsistentState(_))
        ));
    }

    #[test]
    fn pure_death_empties_network() {
        let mut cfg = cycle_config(7, 0.0, 1.0).with_horizon(Horizon::Time(400.0));
        cfg.record_customers = true;
        let g = cfg.topology.clone();
        let t = simulate(&cfg, NetworkState::uniform_level(&g, 1, 10)).unwrap();
        let last = t.sample_count() - 1;
        assert_eq!(t.snapshot(last), vec![0; 7]);
        assert_eq!(t.customers.as_ref().unwrap().len(), 70);
        assert!(t.customers.unwrap().iter().all(|c| c.exit_distance <= 1));
        assert_eq!(t.event_counts.arrival, 0);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = cycle_config(7, 0.4, 1.0).with_seed(99).with_horizon(Horizon::Time(50.0));
        let g = cfg.topology.clone();
        let a = simulate(&cfg, NetworkState::empty(&g, 1)).unwrap();
        let b = simulate(&cfg, NetworkState::empty(&g, 1)).unwrap();
        assert_eq!(a.queue_lengths, b.queue_lengths);
        assert_eq!(a.event_counts, b.event_counts);
        let c = simulate(&cfg.clone().with_seed(100), NetworkState::empty(&g, 1)).unwrap();
        assert_ne!(a.queue_lengths, c.queue_lengths);
    }

    #[test]
    fn embedded_chain_sampling() {
        let mut cfg = cycle_config(5, 0.5, 1.0).with_horizon(Horizon::Events(100));
        cfg.record_events = true;
        let g = cfg.topology.clone();
        let t = simulate(&cfg, NetworkState::uniform_level(&g, 1, 3)).unwrap();
        assert_eq!(t.events.as_ref().unwrap().len(), 100);
        assert_eq!(embedded_chain_samples(&t, 1).unwrap().len(), 100);
        assert_eq!(embedded_chain_samples(&t, 10).unwrap().len(), 10);
        assert!(embedded_chain_samples(&t, 1000).unwrap().is_empty());

        let cfg_no_log = cycle_config(5, 0.5, 1.0).with_horizon(Horizon::Events(10));
        let t2 = simulate(&cfg_no_log, NetworkState::empty(&g, 1)).unwrap();
        assert_eq!(embedded_chain_samples(&t2, 1).unwrap_err(), SimError::NoEventLog);
    }

    #[test]
    fn fifo_order_per_server() {
        let mut cfg = cycle_config(7, 0.45, 1.0).with_replicas(2).with_horizon(Horizon::Events(50_000));
        cfg.record_events = true;
        let g = cfg.topology.clone();
        let t = simulate(&cfg, NetworkState::uniform_level(&g, 2, 2)).unwrap();
        let mut joined: HashMap<usize, std::collections::VecDeque<u64>> = HashMap::new();
        for s in 0..14 {
            joined.insert(s, (0..2).map(|i| (s * 2 + i) as u64).collect());
        }
        for ev in t.events.unwrap() {
            match ev.kind {
                EventKind::Arrival => joined.get_mut(&ev.server).unwrap().push_back(ev.customer.unwrap().id),
                EventKind::Exit | EventKind::Transit => {
                    let served = joined.get_mut(&ev.server).unwrap().pop_front().unwrap();
                    assert_eq!(served, ev.customer.unwrap().id);
                    if let Some(to) = ev.to_server {
                        joined.get_mut(&to).unwrap().push_back(served);
                    }
                }
                EventKind::Swap => {}
            }
        }
    }

    #[test]
    fn transient_growth_on_large_cycle() {
        // K = 11 > 3 / 0.5: every queue keeps growing.
        let cfg = cycle_config(11, 0.5, 1.0).with_seed(3).with_horizon(Horizon::Time(3000.0));
        let g = cfg.topology.clone();
        let t = simulate(&cfg, NetworkState::uniform_level(&g, 1, 50)).unwrap();
        let last = t.snapshot(t.sample_count() - 1);
        let mid = t.snapshot(t.sample_count() / 2);
        for s in 0..11 {
            assert!(last[s] > mid[s] && last[s] > 300, "server {s}: {} -> {}", mid[s], last[s]);
        }
    }
}
