//! The single-particle chain on a finite cycle, where offsets wrap modulo
//! `K`, and its comparison with the chain on the line.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::absorption::{absorb_once, AbsorptionSample};
use super::chain::p2;
use super::tau::{sample_tau, tau_distribution};
use super::{check_beta, check_gamma, NlmpError};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::MeanEstimate;

fn check_cycle(k: usize, min: usize) -> Result<usize, NlmpError> {
    if k % 2 == 1 && k >= min {
        Ok((k - 1) / 2)
    } else {
        Err(NlmpError::InvalidCycle { k, min })
    }
}

/// Representative of `x` modulo `k` in `{-m..m}`, `k = 2m + 1`.
pub fn wrap_offset(x: i64, k: usize) -> i64 {
    let k = k as i64;
    let m = (k - 1) / 2;
    (x + m).rem_euclid(k) - m
}

/// Dense transition matrix of the wrapped chain, indexed by `s + m`.
pub fn circle_chain_matrix(beta: f64, gamma: f64, k: usize) -> Result<Vec<Vec<f64>>, NlmpError> {
    let m = check_cycle(k, 3)? as i64;
    let tau = tau_distribution(beta, gamma, 0)?;
    let n = k;
    let mut q = vec![vec![0.0; n]; n];
    for s in -m..=m {
        for (shift, p) in tau.support() {
            let t = p2(wrap_offset(s + shift, k));
            q[(s + m) as usize][(t + m) as usize] += p;
        }
    }
    Ok(q)
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleRates {
    pub k: usize,
    pub eta: f64,
    pub beta: f64,
    pub lambda: f64,
    pub expected_visits: f64,
    /// Stationary law of the wrapped chain, indexed by `s + (K - 1) / 2`.
    pub q: Vec<f64>,
}

/// `lambda_K(eta) = eta q_0` for the chain on the `K`-cycle's offsets,
/// with `q` from a dense solve of `q (Q - I) = 0`, `sum q = 1`.
pub fn finite_circle_lambda(eta: f64, beta: f64, k: usize) -> Result<CircleRates, NlmpError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(NlmpError::InvalidEta(eta));
    }
    check_cycle(k, 5)?;
    let q = circle_chain_matrix(beta, 1.0 - eta, k)?;
    let n = k;
    // Transposed system with the last balance equation replaced by normalization.
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[j][i] = q[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[n - 1] = vec![1.0; n];
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let stationary = solve_dense(a, b);
    let q0 = stationary[(k - 1) / 2];
    Ok(CircleRates { k, eta, beta, lambda: eta * q0, expected_visits: 1.0 / q0, q: stationary })
}

/// Mean number of services before absorption on the `K`-cycle from the
/// continuous-time distance chain on `{0..m}`; at distance `m` an outward
/// swap keeps the distance at `m`.
pub fn circle_expected_visits(beta: f64, gamma: f64, k: usize) -> Result<f64, NlmpError> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    let m = check_cycle(k, 3)?;
    let n = m + 1;
    let d = 2.0 * beta + gamma;
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = d;
        if i == 0 {
            a[0][1] -= 2.0 * beta;
            continue;
        }
        // Downward moves: swaps, plus a transit from distance >= 2.
        let down = if i == 1 { beta } else { beta + gamma };
        a[i][i - 1] -= down;
        if i < m {
            a[i][i + 1] -= beta;
        } else {
            a[i][i] -= beta;
        }
    }
    let t = solve_dense(a, vec![1.0; n]);
    Ok(gamma * t[0])
}

fn absorb_on_circle_once<R: Rng + ?Sized>(beta: f64, gamma: f64, k: usize, start: i64, rng: &mut R) -> (f64, u64) {
    let (mut s, mut time, mut visits) = (start, 0.0, 0u64);
    loop {
        let (tau, xi) = sample_tau(beta, gamma, rng);
        time += xi;
        visits += 1;
        let moved = wrap_offset(s + tau, k);
        if moved.abs() <= 1 {
            return (time, visits);
        }
        s = p2(moved);
    }
}

const CHUNK: usize = 1 << 13;

fn summarize(samples: &[(f64, f64)]) -> AbsorptionSample {
    let times: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let visits: Vec<f64> = samples.iter().map(|s| s.1).collect();
    AbsorptionSample { time: MeanEstimate::from_samples(&times), visits: MeanEstimate::from_samples(&visits) }
}

/// Monte-Carlo absorption on the `K`-cycle from offset `start`.
pub fn monte_carlo_circle_absorption(
    beta: f64,
    gamma: f64,
    k: usize,
    start: usize,
    particles: usize,
    seed: u64,
) -> Result<AbsorptionSample, NlmpError> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    check_cycle(k, 3)?;
    if particles < 2 {
        return Err(NlmpError::InvalidParameter("need at least 2 particles".into()));
    }
    let samples: Vec<(f64, f64)> = (0..particles.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, c as u64));
            let n = CHUNK.min(particles - c * CHUNK);
            (0..n)
                .map(|_| {
                    let (t, v) = absorb_on_circle_once(beta, gamma, k, start as i64, &mut rng);
                    (t, v as f64)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(summarize(&samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleLineComparison {
    pub start: usize,
    pub circle: MeanEstimate,
    pub line: MeanEstimate,
    /// Paired difference `line - circle` (common random numbers).
    pub difference: MeanEstimate,
}

impl CircleLineComparison {
    /// Whether the circle mean is at most the line mean plus `z` paired SEs.
    pub fn circle_not_slower(&self, z: f64) -> bool {
        self.circle.mean <= self.line.mean + z * self.difference.se
    }
}

/// Mean absorption time on the `K`-cycle versus the half-line, for every
/// start distance `0..=(K - 1) / 2`. Each particle pair is driven by the same
/// random stream, so the two walks share their sojourns and shifts.
pub fn absorption_compare(
    beta: f64,
    gamma: f64,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<CircleLineComparison>, NlmpError> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    let m = check_cycle(k, 3)?;
    if trials < 2 {
        return Err(NlmpError::InvalidParameter("need at least 2 trials".into()));
    }
    (0..=m)
        .map(|start| {
            let seed = derive_seed(seed, start as u64);
            let pairs: Vec<(f64, f64)> = (0..trials.div_ceil(CHUNK))
                .into_par_iter()
                .flat_map_iter(|c| {
                    let mut rng = rng_from_seed(derive_seed(seed, c as u64));
                    let n = CHUNK.min(trials - c * CHUNK);
                    (0..n)
                        .map(|_| {
                            let mut twin = rng.clone();
                            let circle = absorb_on_circle_once(beta, gamma, k, start as i64, &mut rng).0;
                            let line = absorb_once(beta, gamma, start as i64, &mut twin).0;
                            (circle, line)
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            let circle: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let line: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let diff: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
            Ok(CircleLineComparison {
                start,
                circle: MeanEstimate::from_samples(&circle),
                line: MeanEstimate::from_samples(&line),
                difference: MeanEstimate::from_samples(&diff),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlmp::rates::lambda_at;

    #[test]
    fn wrapping() {
        assert_eq!(wrap_offset(3, 5), -2);
        assert_eq!(wrap_offset(-3, 5), 2);
        assert_eq!(wrap_offset(7, 7), 0);
        assert_eq!(wrap_offset(2, 5), 2);
    }

    #[test]
    fn no_swaps_keeps_lambda_equal_eta() {
        for k in [5, 7, 21] {
            let r = finite_circle_lambda(0.5, 0.0, k).unwrap();
            assert!((r.lambda - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_even_or_small_cycles() {
        assert_eq!(
            finite_circle_lambda(0.5, 1.0, 6).unwrap_err(),
            NlmpError::InvalidCycle { k: 6, min: 5 }
        );
        assert!(finite_circle_lambda(0.5, 1.0, 3).is_err());
    }

    #[test]
    fn rows_are_stochastic() {
        let q = circle_chain_matrix(1.0, 0.5, 7).unwrap();
        for row in q {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_solve_agrees_with_distance_chain() {
        for k in [5, 7, 11, 21] {
            let r = finite_circle_lambda(0.5, 1.0, k).unwrap();
            let en = circle_expected_visits(1.0, 0.5, k).unwrap();
            assert!((r.expected_visits - en).abs() < 1e-8, "K {k}: {} vs {en}", r.expected_visits);
        }
    }

    #[test]
    fn converges_to_line_value() {
        let inf = lambda_at(0.5, 1.0).unwrap();
        let errs: Vec<f64> = [5, 11, 21, 41]
            .iter()
            .map(|&k| (finite_circle_lambda(0.5, 1.0, k).unwrap().lambda - inf).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[3] < 0.01);
    }

    #[test]
    fn five_cycle_matches_monte_carlo() {
        let r = finite_circle_lambda(0.5, 1.0, 5).unwrap();
        let mc = monte_carlo_circle_absorption(1.0, 0.5, 5, 0, 200_000, 17).unwrap();
        assert!(mc.visits.z_score(r.expected_visits) < 3.0, "{mc:?} vs {}", r.expected_visits);
    }

    #[test]
    fn circle_no_slower_than_line() {
        let res = absorption_compare(1.0, 0.5, 7, 50_000, 5).unwrap();
        assert_eq!(res.len(), 4);
        for c in &res {
            assert!(c.circle_not_slower(3.0), "{c:?}");
        }
    }

    #[test]
    fn frozen_positions_give_identical_walks() {
        let res = absorption_compare(0.0, 0.5, 7, 1_000, 5).unwrap();
        for c in &res {
            assert_eq!(c.circle.mean, c.line.mean);
        }
        assert!((res[0].circle.mean - 2.0).abs() < 4.0 * res[0].circle.se);
    }
}
