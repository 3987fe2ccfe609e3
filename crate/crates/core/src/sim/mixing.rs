//! Mixing of server positions under the swap dynamics alone.
//!
//! Queues never influence swaps, so a tagged server's base vertex performs a
//! continuous-time random walk; [`permutation_mixing`] samples it by running
//! the full swap process, [`exact_permutation_mixing`] solves the walk and
//! [`exact_placement_mixing`] solves the whole placement on small graphs.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Horizon, SimConfig, SwapNormalization};
use super::engine::Simulator;
use super::state::NetworkState;
use super::SimError;
use crate::rng::{derive_seed, rng_from_seed};
use crate::transit::for_each_permutation;

pub const MIN_MIXING_TRIALS: usize = 100;
/// Largest vertex count for [`exact_placement_mixing`] (8! placements).
pub const MAX_PLACEMENT_VERTICES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingEstimate {
    pub t: f64,
    pub trials: usize,
    /// Plug-in total-variation distance between the empirical law of the
    /// tagged server's base vertex and uniform.
    pub tv: f64,
    /// Expected plug-in TV of a perfectly uniform sample of this size; the
    /// estimate cannot meaningfully go below this.
    pub noise_floor: f64,
    pub counts: Vec<u64>,
}

fn tv_to_uniform(p: &[f64]) -> f64 {
    let u = 1.0 / p.len() as f64;
    0.5 * p.iter().map(|x| (x - u).abs()).sum::<f64>()
}

/// Estimate the TV distance to uniform of the base vertex of server 0 at
/// time `t`, starting from the identity placement. Each trial runs the swap
/// process (no customers) with its own derived seed.
pub fn permutation_mixing(config: &SimConfig, t: f64, trials: usize) -> Result<MixingEstimate, SimError> {
    if trials < MIN_MIXING_TRIALS {
        return Err(SimError::TooFewTrials { got: trials, min: MIN_MIXING_TRIALS });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SimError::InvalidParameter(format!("t must be >= 0 (got {t})")));
    }
    let mut swap_only = config.clone();
    swap_only.arrivals = super::config::ArrivalLaw::same_node(0.0);
    swap_only.horizon = Horizon::Time(t.max(f64::MIN_POSITIVE));
    swap_only.validate()?;
    let k = config.topology.vertex_count();

    let vertices: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let rng = rng_from_seed(derive_seed(config.seed, i as u64));
            let state = NetworkState::empty(&swap_only.topology, swap_only.replicas);
            let mut sim = Simulator::with_rng(&swap_only, state, rng).expect("validated config");
            let mut at = sim.state().vertex_of(0);
            while let Some(ev) = sim.step() {
                if ev.time > t {
                    break;
                }
                at = sim.state().vertex_of(0);
            }
            at
        })
        .collect();
    let mut counts = vec![0u64; k];
    for v in vertices {
        counts[v] += 1;
    }
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    // E|X/n - 1/k| for X ~ Bin(n, 1/k) is about sqrt(2 (k-1) / (pi n k^2)).
    let noise_floor = 0.5 * k as f64 * (2.0 * (k as f64 - 1.0) / (std::f64::consts::PI * trials as f64)).sqrt()
        / k as f64;
    Ok(MixingEstimate { t, trials, tv: tv_to_uniform(&p), noise_floor, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactMixing {
    pub t: f64,
    pub tv: f64,
    pub distribution: Vec<f64>,
}

/// Law of the tagged server's base vertex at time `t`, computed by
/// uniformization of the walk that moves to each neighbor at the swap rate
/// felt by one server on that edge.
pub fn exact_permutation_mixing(config: &SimConfig, t: f64) -> Result<ExactMixing, SimError> {
    config.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SimError::InvalidParameter(format!("t must be >= 0 (got {t})")));
    }
    let graph = &config.topology;
    let k = graph.vertex_count();
    // Every replica pair on an edge gets an equal share of the edge rate; the
    // tagged server sits in N of the N^2 pairs.
    let n = config.replicas as f64;
    let per_neighbor = match config.swap_normalization {
        SwapNormalization::PerPair => config.beta,
        SwapNormalization::PerEdge => config.beta / n,
    };
    let max_degree = (0..k).map(|v| graph.neighbors(v).len()).max().unwrap_or(0) as f64;
    let unif = per_neighbor * max_degree;
    let mut p = vec![0.0; k];
    // Identity placement: server 0 starts on vertex 0.
    p[0] = 1.0;
    if unif > 0.0 && t > 0.0 {
        let mean = unif * t;
        let mut acc = vec![0.0; k];
        let mut cur = p.clone();
        // Poisson weights computed in log space to survive large means.
        let max_terms = (mean + 12.0 * mean.sqrt() + 50.0).ceil() as usize;
        let mut log_w = -mean;
        for j in 0..=max_terms {
            if j > 0 {
                log_w += mean.ln() - (j as f64).ln();
                let mut next = vec![0.0; k];
                for v in 0..k {
                    let moving = per_neighbor / unif;
                    let stay = 1.0 - moving * graph.neighbors(v).len() as f64;
                    next[v] += cur[v] * stay;
                    for &w in graph.neighbors(v) {
                        next[w] += cur[v] * moving;
                    }
                }
                cur = next;
            }
            let w = log_w.exp();
            for v in 0..k {
                acc[v] += w * cur[v];
            }
        }
        let total: f64 = acc.iter().sum();
        p = acc.into_iter().map(|x| x / total).collect();
    }
    Ok(ExactMixing { t, tv: tv_to_uniform(&p), distribution: p })
}

/// Law of the full placement (which server sits on which vertex) at time
/// `t`, from the identity placement, by uniformization over all `|V|!`
/// placements. Single replica only; every edge swaps at rate `beta`.
/// `distribution` is indexed by [`for_each_permutation`] order, and `tv` is
/// the distance to the uniform law on placements.
pub fn exact_placement_mixing(config: &SimConfig, t: f64) -> Result<ExactMixing, SimError> {
    config.validate()?;
    if config.replicas != 1 {
        return Err(SimError::InvalidParameter("placement law needs a single replica".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SimError::InvalidParameter(format!("t must be >= 0 (got {t})")));
    }
    let graph = &config.topology;
    let k = graph.vertex_count();
    if k > MAX_PLACEMENT_VERTICES {
        return Err(SimError::InvalidParameter(format!(
            "{k} vertices exceed the placement enumeration bound of {MAX_PLACEMENT_VERTICES}"
        )));
    }
    let mut placements = Vec::new();
    for_each_permutation(k, |p| placements.push(p.to_vec()));
    let index: HashMap<&[usize], usize> = placements.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let edges = graph.edges();
    // moves[i][e] = placement reached from i by swapping across edge e.
    let moves: Vec<Vec<usize>> = placements
        .iter()
        .map(|p| {
            edges
                .iter()
                .map(|&(u, v)| {
                    let mut q = p.clone();
                    q.swap(u, v);
                    index[q.as_slice()]
                })
                .collect()
        })
        .collect();
    let n = placements.len();
    let mut p = vec![0.0; n];
    p[index[(0..k).collect::<Vec<_>>().as_slice()]] = 1.0;
    let mean = config.beta * edges.len() as f64 * t;
    if mean > 0.0 {
        // Uniformized at the total swap rate, so every jump is a swap across
        // a uniformly chosen edge.
        let share = 1.0 / edges.len() as f64;
        let max_terms = (mean + 12.0 * mean.sqrt() + 50.0).ceil() as usize;
        let mut acc = vec![0.0; n];
        let mut cur = p.clone();
        let mut log_w = -mean;
        for j in 0..=max_terms {
            if j > 0 {
                log_w += mean.ln() - (j as f64).ln();
                let mut next = vec![0.0; n];
                for (i, targets) in moves.iter().enumerate() {
                    for &to in targets {
                        next[to] += cur[i] * share;
                    }
                }
                cur = next;
            }
            let w = log_w.exp();
            acc.iter_mut().zip(&cur).for_each(|(a, c)| *a += w * c);
        }
        let total: f64 = acc.iter().sum();
        p = acc.into_iter().map(|x| x / total).collect();
    }
    Ok(ExactMixing { t, tv: tv_to_uniform(&p), distribution: p })
}
