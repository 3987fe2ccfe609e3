//! Mean absorption time of a tagged customer's distance to its destination.
//!
//! The distance moves up at rate `beta`, down at rate `beta` from swaps plus
//! `gamma` from transits; at distance 1 a service absorbs, at distance 0 both
//! swaps lead to 1 and a service absorbs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chain::p2;
use super::tau::sample_tau;
use super::{check_beta, check_gamma, NlmpError};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::MeanEstimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionModel {
    pub beta: f64,
    pub gamma: f64,
    /// `t[n]` = mean time to absorption from distance `n`, `0 <= n <= n_max`.
    pub t: Vec<f64>,
    /// Mean number of services (servers visited) from distance 0.
    pub expected_visits: f64,
}

/// Solve the absorption system on `0..=n_max` with the linear-growth
/// condition `T(n_max + 1) = T(n_max) + 1 / gamma` (the unique solution
/// that does not grow exponentially), by the Thomas algorithm.
pub fn absorption_times(beta: f64, gamma: f64, n_max: usize) -> Result<AbsorptionModel, NlmpError> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    let n_max = n_max.max(1);
    let size = n_max + 1;
    let d = 2.0 * beta + gamma;
    // Row n: lower[n] T(n-1) + diag[n] T(n) + upper[n] T(n+1) = rhs[n].
    let mut lower = vec![0.0; size];
    let mut diag = vec![d; size];
    let mut upper = vec![0.0; size];
    let mut rhs = vec![1.0; size];
    upper[0] = -2.0 * beta;
    lower[1] = -beta;
    upper[1] = -beta;
    for n in 2..size {
        lower[n] = -(beta + gamma);
        upper[n] = -beta;
    }
    // Eliminate T(n_max + 1) with the boundary condition.
    diag[n_max] += upper[n_max];
    rhs[n_max] -= upper[n_max] / gamma;
    upper[n_max] = 0.0;

    let mut c = vec![0.0; size];
    let mut r = vec![0.0; size];
    c[0] = upper[0] / diag[0];
    r[0] = rhs[0] / diag[0];
    for n in 1..size {
        let den = diag[n] - lower[n] * c[n - 1];
        c[n] = upper[n] / den;
        r[n] = (rhs[n] - lower[n] * r[n - 1]) / den;
    }
    let mut t = vec![0.0; size];
    t[n_max] = r[n_max];
    for n in (0..n_max).rev() {
        t[n] = r[n] - c[n] * t[n + 1];
    }
    let expected_visits = gamma * t[0];
    Ok(AbsorptionModel { beta, gamma, t, expected_visits })
}

/// `T(n) = (n + (beta / gamma) (2 beta + gamma) / (3 beta + gamma)) / gamma`
/// for `n >= 1`, and `T(0) = 1 / gamma + (beta / gamma)^2 * 2 / (3 beta + gamma)`.
pub fn absorption_time_closed_form(beta: f64, gamma: f64, n: usize) -> f64 {
    if n == 0 {
        1.0 / gamma + (beta * beta) / (gamma * gamma) * 2.0 / (3.0 * beta + gamma)
    } else {
        (n as f64 + beta / gamma * (2.0 * beta + gamma) / (3.0 * beta + gamma)) / gamma
    }
}

/// `E[N] = gamma T(0) = 1 + 2 beta^2 / (gamma (3 beta + gamma))`.
pub fn expected_visits(beta: f64, gamma: f64) -> Result<f64, NlmpError> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    Ok(1.0 + 2.0 * beta * beta / (gamma * (3.0 * beta + gamma)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionSample {
    pub time: MeanEstimate,
    pub visits: MeanEstimate,
}

/// One particle started at signed offset `start`: each sojourn lasts
/// `Exp(gamma)` and shifts the offset by `tau`; then it exits if within one
/// of 0, otherwise steps one closer. Returns `(time, services)`.
pub fn absorb_once<R: Rng + ?Sized>(beta: f64, gamma: f64, start: i64, rng: &mut R) -> (f64, u64) {
    let (mut s, mut time, mut visits) = (start, 0.0, 0u64);
    loop {
        let (tau, xi) = sample_tau(beta, gamma, rng);
        time += xi;
        visits += 1;
        let moved = s + tau;
        if moved.abs() <= 1 {
            return (time, visits);
        }
        s = p2(moved);
    }
}

const CHUNK: usize = 1 << 14;

/// Monte-Carlo absorption time and visit count from distance `start`, over
/// `particles` independent particles. Chunks use derived seeds and are
/// combined in order, so the result does not depend on thread count.
pub fn monte_carlo_absorption(
    beta: f64,
    gamma: f64,
    start: usize,
    particles: usize,
    seed: u64,
) -> Result<AbsorptionSample, NlmpError> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    if particles < 2 {
        return Err(NlmpError::InvalidParameter("need at least 2 particles".into()));
    }
    let chunks = particles.div_ceil(CHUNK);
    let sums: Vec<[f64; 4]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, c as u64));
            let n = CHUNK.min(particles - c * CHUNK);
            let mut acc = [0.0; 4];
            for _ in 0..n {
                let (t, v) = absorb_once(beta, gamma, start as i64, &mut rng);
                let v = v as f64;
                acc[0] += t;
                acc[1] += t * t;
                acc[2] += v;
                acc[3] += v * v;
            }
            acc
        })
        .collect();
    let mut tot = [0.0; 4];
    for s in &sums {
        for i in 0..4 {
            tot[i] += s[i];
        }
    }
    let n = particles as f64;
    let est = |sum: f64, sq: f64| {
        let mean = sum / n;
        let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
        MeanEstimate { mean, se: (var / n).sqrt(), n: particles }
    };
    Ok(AbsorptionSample { time: est(tot[0], tot[1]), visits: est(tot[2], tot[3]) })
}
