//! Metastability of finite mean-field networks: how long a transient
//! network looks stationary, and how close it stays to the mean-field
//! equilibrium meanwhile.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlmp::{geometric_test, RateProfile};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sim::{EventKind, Horizon, NetworkState, SimConfig, SimError, Simulator};
use crate::stats::{mann_whitney_greater, quantile_sorted, ChiSquareTest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetastabilityError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("lifetime runs need a time horizon")]
    NeedTimeHorizon,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartState {
    #[default]
    Empty,
    /// Queue lengths i.i.d. geometric with this parameter.
    Geometric { eta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRun {
    pub run: usize,
    /// First time every queue exceeds the threshold, or the horizon when
    /// censored.
    pub hitting_time: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeEstimate {
    pub replicas: usize,
    pub threshold: u32,
    pub horizon: f64,
    pub runs: Vec<LifetimeRun>,
    pub observed: usize,
    pub censored: usize,
    /// Quartiles over all runs, censored ones counted at the horizon (so
    /// they are lower bounds whenever censoring reaches them).
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
}

impl LifetimeEstimate {
    pub fn times(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.hitting_time).collect()
    }
}

/// Default departure threshold: ten times the mean queue length of the
/// low-load equilibrium.
pub fn default_threshold(eta_minus: f64) -> u32 {
    (10.0 * eta_minus / (1.0 - eta_minus)).ceil().max(1.0) as u32
}

/// Run `runs` independent copies (seeds derived from `config.seed`) and
/// record when the smallest queue first exceeds `threshold`.
pub fn metastable_lifetime(
    config: &SimConfig,
    threshold: u32,
    runs: usize,
    start: StartState,
) -> Result<LifetimeEstimate, MetastabilityError> {
    let Horizon::Time(horizon) = config.horizon else {
        return Err(MetastabilityError::NeedTimeHorizon);
    };
    if runs == 0 {
        return Err(MetastabilityError::InvalidParameter("runs must be positive".into()));
    }
    if let StartState::Geometric { eta } = start {
        if !(0.0..1.0).contains(&eta) {
            return Err(MetastabilityError::InvalidParameter(format!("start eta {eta} outside [0, 1)")));
        }
    }
    config.validate()?;
    let results: Result<Vec<LifetimeRun>, SimError> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let seed = derive_seed(config.seed, run as u64);
            let mut rng = rng_from_seed(seed);
            let graph = &config.topology;
            let state = match start {
                StartState::Empty => NetworkState::empty(graph, config.replicas),
                StartState::Geometric { eta } => NetworkState::geometric(graph, config.replicas, eta, &mut rng),
            };
            let mut sim = Simulator::with_rng(config, state, rng)?;
            let mut lengths = sim.state().queue_lengths();
            // Number of queues at or below the threshold.
            let mut low = lengths.iter().filter(|&&l| l <= threshold).count();
            if low == 0 {
                return Ok(LifetimeRun { run, hitting_time: 0.0, censored: false });
            }
            while let Some(ev) = sim.step() {
                if ev.time > horizon {
                    break;
                }
                let mut change = |server: usize, delta: i64| {
                    let before = lengths[server];
                    let after = (before as i64 + delta) as u32;
                    lengths[server] = after;
                    if before <= threshold && after > threshold {
                        low -= 1;
                    } else if before > threshold && after <= threshold {
                        low += 1;
                    }
                };
                match ev.kind {
                    EventKind::Arrival => change(ev.server, 1),
                    EventKind::Exit => change(ev.server, -1),
                    EventKind::Transit => {
                        change(ev.server, -1);
                        change(ev.to_server.expect("transit target"), 1);
                    }
                    EventKind::Swap => {}
                }
                if low == 0 {
                    return Ok(LifetimeRun { run, hitting_time: ev.time, censored: false });
                }
            }
            Ok(LifetimeRun { run, hitting_time: horizon, censored: true })
        })
        .collect();
    let runs_out = results?;
    let mut sorted: Vec<f64> = runs_out.iter().map(|r| r.hitting_time).collect();
    sorted.sort_by(f64::total_cmp);
    let censored = runs_out.iter().filter(|r| r.censored).count();
    Ok(LifetimeEstimate {
        replicas: config.replicas,
        threshold,
        horizon,
        observed: runs_out.len() - censored,
        censored,
        median: quantile_sorted(&sorted, 0.5),
        lower_quartile: quantile_sorted(&sorted, 0.25),
        upper_quartile: quantile_sorted(&sorted, 0.75),
        runs: runs_out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendStep {
    pub from_replicas: usize,
    pub to_replicas: usize,
    pub u: f64,
    /// One-sided p-value for "lifetimes at `to_replicas` are larger".
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub medians: Vec<(usize, f64)>,
    pub steps: Vec<TrendStep>,
    pub medians_increasing: bool,
}

impl TrendTest {
    /// Medians strictly increase and every consecutive rank test rejects at `alpha`.
    pub fn increasing_at(&self, alpha: f64) -> bool {
        self.medians_increasing && self.steps.iter().all(|s| s.p_value < alpha)
    }
}

/// Consecutive one-sided Mann-Whitney tests over estimates ordered by
/// replica count. Censored times enter at the horizon, which only ranks
/// them as ties among the longest lifetimes.
pub fn lifetime_trend(estimates: &[LifetimeEstimate]) -> TrendTest {
    let mut sorted: Vec<&LifetimeEstimate> = estimates.iter().collect();
    sorted.sort_by_key(|e| e.replicas);
    let medians: Vec<(usize, f64)> = sorted.iter().map(|e| (e.replicas, e.median)).collect();
    let steps = sorted
        .windows(2)
        .map(|w| {
            let (u, p_value) = mann_whitney_greater(&w[0].times(), &w[1].times());
            TrendStep { from_replicas: w[0].replicas, to_replicas: w[1].replicas, u, p_value }
        })
        .collect();
    let medians_increasing = medians.windows(2).all(|w| w[1].1 > w[0].1);
    TrendTest { medians, steps, medians_increasing }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitRateCheck {
    pub k: i64,
    /// Transit arrivals of type `k` per server per unit time.
    pub empirical: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub window: (f64, f64),
    pub samples: u64,
    pub mean_queue: f64,
    /// `eta / (1 - eta)` for the profile's load.
    pub equilibrium_mean_queue: f64,
    pub queue_length: ChiSquareTest,
    pub transit_rates: Vec<TransitRateCheck>,
    pub max_rate_discrepancy: f64,
    /// Mean queue at least five times the equilibrium mean: the window has
    /// run into the divergence.
    pub diverged: bool,
}

/// Compare the network on `window` (started empty at time 0) with the
/// mean-field equilibrium `profile`: pooled queue lengths sampled every
/// `spacing` against geometric(`eta`), and transit arrival rates by type
/// against `nu_k` for `|k| <= 5` (cycles only; empty otherwise).
pub fn equilibrium_comparison(
    config: &SimConfig,
    profile: &RateProfile,
    window: (f64, f64),
    spacing: f64,
) -> Result<EquilibriumReport, MetastabilityError> {
    let (t0, t1) = window;
    if !(t0 >= 0.0 && t1 > t0 && spacing > 0.0) {
        return Err(MetastabilityError::InvalidParameter(format!(
            "need 0 <= t0 < t1 and spacing > 0 (got {window:?}, {spacing})"
        )));
    }
    let graph = config.topology.clone();
    let mut sim = Simulator::new(config, NetworkState::empty(&graph, config.replicas))?;
    const SPAN: i64 = 5;
    let mut type_counts = vec![0u64; (2 * SPAN + 1) as usize];
    let mut length_counts: Vec<u64> = Vec::new();
    let mut next_sample = t0;
    let mut samples = 0u64;
    let mut total_len = 0u64;
    loop {
        let before = sim.state().queue_lengths();
        let ev = sim.step();
        let t = ev.as_ref().map_or(f64::INFINITY, |e| e.time);
        while next_sample < t && next_sample <= t1 {
            for &l in &before {
                let l = l as usize;
                if length_counts.len() <= l {
                    length_counts.resize(l + 1, 0);
                }
                length_counts[l] += 1;
                total_len += l as u64;
                samples += 1;
            }
            next_sample += spacing;
        }
        let Some(ev) = ev else { break };
        if ev.time > t1 {
            break;
        }
        if ev.time >= t0 && ev.kind == EventKind::Transit {
            let c = ev.customer.expect("transit carries its customer");
            let at = ev.to_node.expect("transit target") / config.replicas;
            if let Some(k) = graph.cycle_offset(c.destination, at) {
                if k.abs() <= SPAN {
                    type_counts[(k + SPAN) as usize] += 1;
                }
            }
        }
    }
    if samples == 0 {
        return Err(MetastabilityError::InvalidParameter("window holds no sample time".into()));
    }
    let servers = config.node_count() as f64;
    let transit_rates: Vec<TransitRateCheck> = if graph.cycle_offset(0, 0).is_some() {
        (-SPAN..=SPAN)
            .filter(|&k| k != 0)
            .map(|k| TransitRateCheck {
                k,
                empirical: type_counts[(k + SPAN) as usize] as f64 / ((t1 - t0) * servers),
                nu: profile.nu_at(k),
            })
            .collect()
    } else {
        Vec::new()
    };
    let max_rate_discrepancy = transit_rates.iter().map(|c| (c.empirical - c.nu).abs()).fold(0.0, f64::max);
    let mean_queue = total_len as f64 / samples as f64;
    let equilibrium_mean_queue = profile.eta / (1.0 - profile.eta);
    Ok(EquilibriumReport {
        window,
        samples,
        mean_queue,
        equilibrium_mean_queue,
        queue_length: geometric_test(&length_counts, profile.eta),
        transit_rates,
        max_rate_discrepancy,
        diverged: mean_queue >= 5.0 * equilibrium_mean_queue,
    })
}
