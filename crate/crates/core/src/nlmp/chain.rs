use serde::{Deserialize, Serialize};

use super::tau::TypeOffsetDistribution;
use super::NlmpError;

/// Deterministic move after a service: offsets within one of the
/// destination leave (and a fresh customer starts at 0), farther ones step
/// one closer.
pub fn p2(s: i64) -> i64 {
    match s {
        -1..=1 => 0,
        s if s >= 2 => s - 1,
        s => s + 1,
    }
}

/// The single-particle chain `Q = P1 P2` on `{-m..m}`: add an independent
/// `tau`, fold anything beyond `+-m` back onto the boundary, then apply
/// [`p2`]. Applied matrix-free since `P1` is a banded convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleParticleChain {
    pub tau: TypeOffsetDistribution,
    pub m: usize,
}

pub fn build_chain(tau: TypeOffsetDistribution, m: usize) -> Result<SingleParticleChain, NlmpError> {
    let min = tau.m + 2;
    if m < min {
        return Err(NlmpError::TruncationTooSmall { m, min });
    }
    Ok(SingleParticleChain { tau, m })
}

impl SingleParticleChain {
    pub fn state_count(&self) -> usize {
        2 * self.m + 1
    }

    pub fn index(&self, s: i64) -> usize {
        (s + self.m as i64) as usize
    }

    pub fn state(&self, i: usize) -> i64 {
        i as i64 - self.m as i64
    }

    fn clamp(&self, s: i64) -> i64 {
        s.clamp(-(self.m as i64), self.m as i64)
    }

    /// Row `Q(s, .)` as a dense vector.
    pub fn row(&self, s: i64) -> Vec<f64> {
        let mut out = vec![0.0; self.state_count()];
        for (k, p) in self.tau.support() {
            out[self.index(p2(self.clamp(s + k)))] += p;
        }
        out
    }

    /// `x Q` for a row vector `x`, written into `out`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.state_count();
        let m = self.m as i64;
        let tm = self.tau.m as i64;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut mixed = vec![0.0; n];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let s = i as i64 - m;
            let lo = s - tm;
            let hi = s + tm;
            if lo >= -m && hi <= m {
                let base = (lo + m) as usize;
                for (j, &p) in self.tau.probs.iter().enumerate() {
                    mixed[base + j] += xi * p;
                }
            } else {
                for (j, &p) in self.tau.probs.iter().enumerate() {
                    let t = (lo + j as i64).clamp(-m, m);
                    mixed[(t + m) as usize] += xi * p;
                }
            }
        }
        for (i, &v) in mixed.iter().enumerate() {
            out[self.index(p2(self.state(i)))] += v;
        }
    }

    /// `E|next|` from state `s`.
    pub fn expected_abs_next(&self, s: i64) -> f64 {
        self.row(s).iter().enumerate().map(|(i, p)| self.state(i).abs() as f64 * p).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryLaw {
    pub m: usize,
    /// `q[s + m]`.
    pub q: Vec<f64>,
    pub iterations: usize,
    /// `|| q Q - q ||_1` at termination.
    pub residual: f64,
}

impl StationaryLaw {
    pub fn prob(&self, s: i64) -> f64 {
        let m = self.m as i64;
        if s.abs() > m {
            0.0
        } else {
            self.q[(s + m) as usize]
        }
    }

    /// Mass on the two boundary states.
    pub fn edge_mass(&self) -> f64 {
        self.q[0] + self.q[self.q.len() - 1]
    }
}

pub const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// Stationary law of `Q` by power iteration from the point mass at 0
/// (where every customer starts), stopping once `|| q Q - q ||_1 < tol`.
/// `Q` is aperiodic (0 can return to 0 in one step), so no averaging is
/// needed.
pub fn stationary_q(chain: &SingleParticleChain, tol: f64) -> Result<StationaryLaw, NlmpError> {
    let n = chain.state_count();
    let mut q = vec![0.0; n];
    q[chain.index(0)] = 1.0;
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_POWER_ITERATIONS {
        chain.apply(&q, &mut next);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        residual = q.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut q, &mut next);
        if residual < tol {
            // Exact symmetry is guaranteed in law; remove rounding asymmetry.
            for i in 0..n / 2 {
                let avg = 0.5 * (q[i] + q[n - 1 - i]);
                q[i] = avg;
                q[n - 1 - i] = avg;
            }
            return Ok(StationaryLaw { m: chain.m, q, iterations: it, residual });
        }
    }
    Err(NlmpError::NotConverged { iterations: MAX_POWER_ITERATIONS, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlmp::tau::{sample_tau, tau_distribution};
    use crate::rng::rng_from_seed;

    fn chain(beta: f64, gamma: f64, extra: usize) -> SingleParticleChain {
        let tau = tau_distribution(beta, gamma, 0).unwrap();
        let m = tau.m + extra;
        build_chain(tau, m).unwrap()
    }

    #[test]
    fn p2_table() {
        assert_eq!([-3, -2, -1, 0, 1, 2, 3].map(p2), [-2, -1, 0, 0, 0, 1, 2]);
    }

    #[test]
    fn rows_stochastic_and_sign_symmetric() {
        let c = chain(1.0, 0.5, 40);
        let m = c.m as i64;
        for s in -m..=m {
            let row = c.row(s);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mirrored = c.row(-s);
            for t in -m..=m {
                assert!((row[c.index(t)] - mirrored[c.index(-t)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn apply_agrees_with_rows() {
        let c = chain(0.7, 0.3, 10);
        let n = c.state_count();
        let x: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64).collect();
        let mut fast = vec![0.0; n];
        c.apply(&x, &mut fast);
        let mut slow = vec![0.0; n];
        for (i, &xi) in x.iter().enumerate() {
            for (j, p) in c.row(c.state(i)).into_iter().enumerate() {
                slow[j] += xi * p;
            }
        }
        for j in 0..n {
            assert!((fast[j] - slow[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn drift_towards_origin() {
        let c = chain(1.0, 0.5, 60);
        for s in [20i64, 40, -40] {
            assert!(c.expected_abs_next(s) < s.abs() as f64);
        }
    }

    #[test]
    fn truncation_must_cover_tau() {
        let tau = tau_distribution(1.0, 0.5, 0).unwrap();
        let m = tau.m;
        assert_eq!(
            build_chain(tau, m + 1).unwrap_err(),
            NlmpError::TruncationTooSmall { m: m + 1, min: m + 2 }
        );
    }

    #[test]
    fn no_swaps_means_all_mass_at_origin() {
        let c = build_chain(tau_distribution(0.0, 0.5, 0).unwrap(), 5).unwrap();
        let q = stationary_q(&c, 1e-12).unwrap();
        assert_eq!(q.prob(0), 1.0);
        // Every state reaches 0 in at most |s| steps.
        let mut x = vec![0.0; c.state_count()];
        x[c.index(5)] = 1.0;
        let mut y = vec![0.0; c.state_count()];
        for _ in 0..5 {
            c.apply(&x, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        assert_eq!(x[c.index(0)], 1.0);
    }

    #[test]
    fn stationary_is_invariant_and_symmetric() {
        let c = chain(1.0, 0.5, 60);
        let q = stationary_q(&c, 1e-12).unwrap();
        let mut qq = vec![0.0; c.state_count()];
        c.apply(&q.q, &mut qq);
        let res: f64 = q.q.iter().zip(&qq).map(|(a, b)| (a - b).abs()).sum();
        assert!(res < 1e-11);
        for s in 0..=c.m as i64 {
            assert_eq!(q.prob(s), q.prob(-s));
        }
        assert!(q.edge_mass() < 1e-12);
    }

    #[test]
    fn stationary_matches_chain_simulation() {
        let (beta, gamma) = (1.0, 0.5);
        let c = chain(beta, gamma, 60);
        let q = stationary_q(&c, 1e-12).unwrap();
        let mut rng = rng_from_seed(1234);
        let (batches, per_batch) = (100usize, 100_000usize);
        let mut freq = vec![[0.0f64; 9]; batches];
        let mut s = 0i64;
        for b in freq.iter_mut() {
            for _ in 0..per_batch {
                if s.abs() <= 4 {
                    b[(s + 4) as usize] += 1.0 / per_batch as f64;
                }
                s = p2(s + sample_tau(beta, gamma, &mut rng).0);
            }
        }
        for k in -4i64..=4 {
            let xs: Vec<f64> = freq.iter().map(|b| b[(k + 4) as usize]).collect();
            let est = crate::stats::MeanEstimate::from_samples(&xs);
            assert!(est.z_score(q.prob(k)).abs() < 3.0, "k {k}: {est:?} vs {}", q.prob(k));
        }
    }
}
