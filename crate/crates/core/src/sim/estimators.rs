//! Monte-Carlo estimators on top of [`Simulator`]: queue drift over event
//! blocks, exit probability of deep customers and the distribution of the
//! server a deep customer transits to.

use serde::{Deserialize, Serialize};

use super::config::{Horizon, SimConfig};
use super::engine::{EventKind, Simulator};
use super::state::NetworkState;
use super::SimError;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{chi_square_uniform, ratio_estimate, z_value, ChiSquareTest, MeanEstimate};

/// `50 * nodes * max(1, beta)` events: long enough for server positions to
/// mix within one block.
pub fn default_block_events(config: &SimConfig) -> usize {
    (50.0 * config.node_count() as f64 * config.beta.max(1.0)).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftOptions {
    /// Events per block (defaults to [`default_block_events`]).
    pub block_events: Option<usize>,
    pub block_count: usize,
    /// Blocks are only kept while every queue stays above this level
    /// (defaults to twice the block length).
    pub min_queue: Option<u32>,
    /// Starting level of every queue (defaults to four block lengths).
    pub initial_level: Option<u32>,
    /// Leading blocks discarded after the initial start. Restarts keep the
    /// server placement, so they need no further warm-up.
    pub warmup_blocks: usize,
}

impl DriftOptions {
    pub fn new(block_count: usize) -> Self {
        Self {
            block_events: None,
            block_count,
            min_queue: None,
            initial_level: None,
            warmup_blocks: (block_count / 10).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub block_events: usize,
    pub min_queue: u32,
    pub blocks_used: usize,
    /// Blocks discarded as warm-up or because a queue fell to `min_queue`.
    pub blocks_rejected: usize,
    /// Times the state was re-initialized after queues drained.
    pub restarts: usize,
    /// Mean per-server queue increment over one block.
    pub per_block: MeanEstimate,
    /// Mean per-server queue increment per unit of time.
    pub per_time: MeanEstimate,
    /// 95% half-width of `per_time`.
    pub half_width: f64,
}

/// Empirical drift of the per-server queue length, measured over blocks of
/// `block_events` events while all queues stay above `min_queue`. When a
/// queue falls to `min_queue` the block is discarded and the network is
/// re-initialized at the starting level (server positions are kept).
pub fn estimate_drift(config: &SimConfig, options: DriftOptions) -> Result<DriftEstimate, SimError> {
    let block_events = options.block_events.unwrap_or_else(|| default_block_events(config));
    if block_events == 0 || options.block_count < 2 {
        return Err(SimError::InvalidParameter("need block_events >= 1 and block_count >= 2".into()));
    }
    let min_queue = options.min_queue.unwrap_or(2 * block_events as u32);
    let level = options.initial_level.unwrap_or(4 * block_events as u32);
    if level <= min_queue {
        return Err(SimError::InvalidParameter(format!(
            "initial level {level} must exceed min_queue {min_queue}"
        )));
    }
    let graph = &config.topology;
    let mut setup_rng = rng_from_seed(derive_seed(config.seed, SETUP_STREAM));
    let mut fresh = || {
        let mut s = NetworkState::uniform_level(graph, config.replicas, level);
        s.randomize_destinations(graph, &mut setup_rng);
        s
    };
    let mut sim = Simulator::new(config, fresh())?;
    let servers = config.node_count() as f64;

    let (mut increments, mut durations) = (Vec::new(), Vec::new());
    let (mut rejected, mut restarts, mut blocks_run) = (0usize, 0usize, 0usize);
    while increments.len() < options.block_count {
        // Cap total work so a draining network cannot loop forever.
        if rejected > 4 * options.block_count + 10 * options.warmup_blocks {
            break;
        }
        let start_total = sim.state().total_customers() as f64;
        let start_time = sim.time();
        let mut drained = false;
        for _ in 0..block_events {
            let ev = sim.step().expect("arrivals or busy servers keep clocks running");
            if matches!(ev.kind, EventKind::Exit | EventKind::Transit)
                && sim.state().queue(ev.server).len() as u32 <= min_queue
            {
                drained = true;
            }
        }
        blocks_run += 1;
        if drained {
            rejected += 1;
            restarts += 1;
            let mut state = fresh();
            state.server_of_node.clone_from(&sim.state().server_of_node);
            state.node_of_server.clone_from(&sim.state().node_of_server);
            state.sim_time = sim.time();
            sim.reset_state(state)?;
            continue;
        }
        if blocks_run <= options.warmup_blocks {
            rejected += 1;
            continue;
        }
        let delta = sim.state().total_customers() as f64 - start_total;
        increments.push(delta / servers);
        durations.push(sim.time() - start_time);
    }
    if increments.len() < options.block_count.div_ceil(2) || increments.len() < 2 {
        return Err(SimError::InsufficientData(format!(
            "only {} usable blocks (queues fell to {min_queue} {restarts} times)",
            increments.len()
        )));
    }
    let per_time = ratio_estimate(&increments, &durations);
    Ok(DriftEstimate {
        block_events,
        min_queue,
        blocks_used: increments.len(),
        blocks_rejected: rejected,
        restarts,
        per_block: MeanEstimate::from_samples(&increments),
        half_width: per_time.se * z_value(0.95),
        per_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub value: f64,
    /// Batch-means standard error.
    pub se: f64,
    pub observations: usize,
}

impl ProportionEstimate {
    pub fn half_width(&self) -> f64 {
        self.se * z_value(0.95)
    }
}

/// Stream index reserved for initial-state randomness, disjoint from the
/// simulator's own stream.
const SETUP_STREAM: u64 = u64::MAX;

fn deep_start(config: &SimConfig, level: u32) -> NetworkState {
    let mut rng = rng_from_seed(derive_seed(config.seed, SETUP_STREAM));
    let mut state = NetworkState::uniform_level(&config.topology, config.replicas, level);
    state.randomize_destinations(&config.topology, &mut rng);
    state
}

fn time_or_event_cap(config: &SimConfig) -> (f64, u64) {
    match config.horizon {
        Horizon::Time(t) => (t, u64::MAX),
        Horizon::Events(n) => (f64::INFINITY, n),
    }
}

/// Fraction of served customers that leave the network, among customers
/// that joined their queue at position `>= position_threshold`. The network
/// starts with every queue at twice the threshold and runs until
/// `observations` such services are seen or the horizon is reached.
pub fn exit_probability_estimate(
    config: &SimConfig,
    position_threshold: u32,
    observations: usize,
) -> Result<ProportionEstimate, SimError> {
    if position_threshold == 0 {
        return Err(SimError::InvalidParameter("position threshold must be >= 1".into()));
    }
    let state = deep_start(config, 2 * position_threshold);
    let mut sim = Simulator::new(config, state)?;
    let (t_max, n_max) = time_or_event_cap(config);
    let mut outcomes: Vec<bool> = Vec::with_capacity(observations);
    let mut steps = 0u64;
    while outcomes.len() < observations && steps < n_max {
        let Some(ev) = sim.step() else { break };
        steps += 1;
        if ev.time > t_max {
            break;
        }
        if let (EventKind::Exit | EventKind::Transit, Some(c)) = (ev.kind, ev.customer) {
            if c.entry_position >= position_threshold {
                outcomes.push(ev.kind == EventKind::Exit);
            }
        }
    }
    if outcomes.len() < observations {
        return Err(SimError::InsufficientData(format!(
            "{} of {observations} deep services observed before the horizon",
            outcomes.len()
        )));
    }
    Ok(batch_proportion(&outcomes, 20))
}

fn batch_proportion(outcomes: &[bool], batches: usize) -> ProportionEstimate {
    let n = outcomes.len();
    let value = outcomes.iter().filter(|&&x| x).count() as f64 / n as f64;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let chunk = &outcomes[b * size..(b + 1) * size];
            chunk.iter().filter(|&&x| x).count() as f64 / size as f64
        })
        .collect();
    let se = MeanEstimate::from_samples(&means).se;
    ProportionEstimate { value, se, observations: n }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpUniformity {
    /// `counts[d - 1]` = transits from server `i` to server `(i + d) mod K`.
    pub counts: Vec<u64>,
    pub chi_square: ChiSquareTest,
}

/// Distribution of the receiving server's label (relative to the sender)
/// for transits of customers that joined at position `>= position_threshold`.
/// At most one transit per sending server is kept per `spacing` time units
/// so that kept observations are close to independent.
pub fn jump_target_uniformity(
    config: &SimConfig,
    observations: usize,
    position_threshold: u32,
    spacing: f64,
) -> Result<JumpUniformity, SimError> {
    if config.replicas != 1 {
        return Err(SimError::InvalidParameter("jump-target test needs N = 1".into()));
    }
    let k = config.node_count();
    let state = deep_start(config, 2 * position_threshold.max(1));
    let mut sim = Simulator::new(config, state)?;
    let (t_max, n_max) = time_or_event_cap(config);
    let mut counts = vec![0u64; k - 1];
    let mut last_kept = vec![f64::NEG_INFINITY; k];
    let (mut kept, mut steps) = (0usize, 0u64);
    while kept < observations && steps < n_max {
        let Some(ev) = sim.step() else { break };
        steps += 1;
        if ev.time > t_max {
            break;
        }
        if ev.kind != EventKind::Transit {
            continue;
        }
        let c = ev.customer.expect("transit carries its customer");
        if c.entry_position < position_threshold || ev.time - last_kept[ev.server] < spacing {
            continue;
        }
        let to = ev.to_server.expect("transit target");
        let d = (to + k - ev.server) % k;
        counts[d - 1] += 1;
        last_kept[ev.server] = ev.time;
        kept += 1;
    }
    if kept < observations || kept == 0 {
        return Err(SimError::InsufficientData(format!(
            "{kept} of {observations} qualifying transits observed"
        )));
    }
    let chi_square = chi_square_uniform(&counts);
    Ok(JumpUniformity { counts, chi_square })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphTopology;

    fn cycle(k: usize, lambda: f64, beta: f64) -> SimConfig {
        SimConfig::new(GraphTopology::cycle(k).unwrap(), lambda, beta)
    }

    #[test]
    fn default_block_length() {
        assert_eq!(default_block_events(&cycle(11, 0.5, 1.0)), 550);
        assert_eq!(default_block_events(&cycle(5, 0.5, 2.0)), 500);
        assert_eq!(default_block_events(&cycle(5, 0.5, 0.2).with_replicas(2)), 500);
    }

    #[test]
    fn stable_side_drift_is_negative() {
        let cfg = cycle(5, 0.1, 1.0).with_seed(17);
        let est = estimate_drift(&cfg, DriftOptions::new(200)).unwrap();
        // lambda + (K-3)/K - 1 = -0.5
        assert!(est.per_time.mean < 0.0);
        assert!((est.per_time.mean + 0.5).abs() < 4.0 * est.per_time.se + 0.02, "{est:?}");
    }

    #[test]
    fn pure_service_on_triangle() {
        // K = 3: every service exits, so each busy queue loses one customer per unit time.
        let cfg = cycle(3, 0.0, 1.0).with_seed(2);
        let est = estimate_drift(&cfg, DriftOptions::new(100)).unwrap();
        assert!((est.per_time.mean + 1.0).abs() < 0.05, "{est:?}");
    }

    #[test]
    fn exit_probability_small_cycle() {
        let cfg = cycle(5, 0.6, 1.0).with_seed(23).with_horizon(Horizon::Time(1e6));
        let est = exit_probability_estimate(&cfg, 50, 40_000).unwrap();
        assert!((est.value - 0.6).abs() < 4.0 * est.se + 0.005, "{est:?}");
    }

    #[test]
    fn exit_probability_regular_graph() {
        let cfg = SimConfig::new(crate::graph::petersen(), 0.5, 1.0)
            .with_seed(5)
            .with_horizon(Horizon::Time(1e6));
        let est = exit_probability_estimate(&cfg, 50, 40_000).unwrap();
        // (g + 1) / |V| = 0.4
        assert!((est.value - 0.4).abs() < 4.0 * est.se + 0.005, "{est:?}");
    }

    #[test]
    fn jump_targets_uniform_on_five_cycle() {
        let cfg = cycle(5, 0.8, 1.0).with_seed(41).with_horizon(Horizon::Time(1e6));
        let res = jump_target_uniformity(&cfg, 2000, 20, 20.0).unwrap();
        assert_eq!(res.counts.len(), 4);
        assert!(res.chi_square.passes(0.01), "{res:?}");
    }

    #[test]
    fn no_transits_on_triangle() {
        let cfg = cycle(3, 0.5, 1.0).with_horizon(Horizon::Time(200.0));
        let err = jump_target_uniformity(&cfg, 10, 1, 0.0).unwrap_err();
        assert!(matches!(err, SimError::InsufficientData(m) if m.starts_with("0 of")));
    }

    #[test]
    fn estimator_argument_checks() {
        let cfg = cycle(5, 0.5, 1.0);
        assert!(exit_probability_estimate(&cfg, 0, 10).is_err());
        assert!(jump_target_uniformity(&cfg.clone().with_replicas(2), 10, 1, 0.0).is_err());
        let mut opts = DriftOptions::new(10);
        opts.initial_level = Some(5);
        opts.min_queue = Some(10);
        assert!(estimate_drift(&cfg, opts).is_err());
    }
}
