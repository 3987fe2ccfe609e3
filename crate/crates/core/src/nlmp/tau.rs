use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use super::{check_beta, check_gamma, NlmpError, EPS_TRUNC};

/// Law of the type shift `tau = W(xi)` accumulated during one sojourn:
/// a symmetric +-1 walk with rate `beta` per direction, run for an
/// `Exp(gamma)` time. Stored on `{-m..m}`; tail mass beyond `m` is folded
/// onto `+-m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeOffsetDistribution {
    pub beta: f64,
    pub gamma: f64,
    pub m: usize,
    /// `probs[k + m] = P(tau = k)`.
    pub probs: Vec<f64>,
    /// Mass that was folded onto the boundary states.
    pub folded_mass: f64,
}

impl TypeOffsetDistribution {
    pub fn prob(&self, k: i64) -> f64 {
        let m = self.m as i64;
        if k.abs() > m {
            0.0
        } else {
            self.probs[(k + m) as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        let m = self.m as i64;
        self.probs.iter().enumerate().map(|(i, p)| (i as i64 - m) as f64 * p).sum()
    }

    /// Nonzero entries as `(offset, probability)`.
    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let m = self.m as i64;
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(move |(i, &p)| (i as i64 - m, p))
    }
}

/// Ratio `r` of the two-sided geometric law `P(tau = k) = c r^|k|`.
pub fn tau_decay_ratio(beta: f64, gamma: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    let s = (gamma * gamma + 4.0 * beta * gamma).sqrt();
    (gamma + 2.0 * beta - s) / (2.0 * beta)
}

/// Closed form `P(tau = k) = gamma / sqrt(gamma^2 + 4 beta gamma) * r^|k|`.
pub fn tau_pmf_closed_form(beta: f64, gamma: f64, k: i64) -> f64 {
    if beta == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let c = gamma / (gamma * gamma + 4.0 * beta * gamma).sqrt();
    c * tau_decay_ratio(beta, gamma).powi(k.unsigned_abs() as i32)
}

/// Law of `tau` from the number of swaps `J`, which is geometric:
/// `P(J = j) = (gamma / (2 beta + gamma)) (2 beta / (2 beta + gamma))^j`,
/// each swap moving the type by an independent fair sign. `min_m` is a
/// floor on the truncation; it grows until the folded tail is below
/// `EPS_TRUNC`.
pub fn tau_distribution(beta: f64, gamma: f64, min_m: usize) -> Result<TypeOffsetDistribution, NlmpError> {
    check_beta(beta)?;
    check_gamma(gamma)?;
    let a = 2.0 * beta / (2.0 * beta + gamma);
    // Working window: the walk's law beyond `w` is far below double precision
    // relevance; whatever leaks out is folded onto the window edge.
    let r = tau_decay_ratio(beta, gamma);
    let w = if r > 0.0 { ((1e-18f64).ln() / r.ln()).ceil() as usize + 2 } else { 0 }.max(min_m);
    let width = 2 * w + 1;
    let mut acc = vec![0.0; width];
    let mut cur = vec![0.0; width];
    let mut next = vec![0.0; width];
    cur[w] = 1.0;
    let mut weight = 1.0 - a;
    // P(J > j), tracked as a product so it cannot stall on rounding.
    let mut remaining = a;
    let mut j = 0usize;
    loop {
        let reach = j.min(w);
        for i in (w - reach)..=(w + reach) {
            acc[i] += weight * cur[i];
        }
        if remaining < 1e-17 || a == 0.0 {
            break;
        }
        // One more swap: convolve with (delta_{-1} + delta_{+1}) / 2, folding at the edges.
        let lo = w - reach;
        let hi = w + reach;
        for x in next[lo.saturating_sub(1)..=(hi + 1).min(width - 1)].iter_mut() {
            *x = 0.0;
        }
        for i in lo..=hi {
            let half = 0.5 * cur[i];
            next[if i == 0 { 0 } else { i - 1 }] += half;
            next[if i + 1 == width { i } else { i + 1 }] += half;
        }
        std::mem::swap(&mut cur, &mut next);
        weight *= a;
        remaining *= a;
        j += 1;
    }
    // Whatever geometric weight was not summed is attributed to the current law.
    if remaining > 0.0 && a > 0.0 {
        let reach = j.min(w);
        for i in (w - reach)..=(w + reach) {
            acc[i] += remaining * cur[i];
        }
    }
    let m = truncation_for(&acc, w, min_m);
    let mut probs = acc[w - m..=w + m].to_vec();
    let left: f64 = acc[..w - m].iter().sum();
    let right: f64 = acc[w + m + 1..].iter().sum();
    probs[0] += left;
    probs[2 * m] += right;
    Ok(TypeOffsetDistribution { beta, gamma, m, probs, folded_mass: left + right })
}

/// Smallest `m >= min_m` whose two-sided tail beyond `m` is below `EPS_TRUNC`.
fn truncation_for(acc: &[f64], w: usize, min_m: usize) -> usize {
    let mut tail = 0.0;
    let mut m = w;
    while m > min_m {
        let add = acc[w - m] + acc[w + m];
        if tail + add >= EPS_TRUNC {
            break;
        }
        tail += add;
        m -= 1;
    }
    m
}

/// Draw `tau` directly: `xi ~ Exp(gamma)`, `J ~ Poisson(2 beta xi)`,
/// `tau = 2 Bin(J, 1/2) - J`. Returns `(tau, xi)`.
pub fn sample_tau<R: Rng + ?Sized>(beta: f64, gamma: f64, rng: &mut R) -> (i64, f64) {
    let xi = Exp::new(gamma).expect("gamma > 0").sample(rng);
    let mean = 2.0 * beta * xi;
    if mean <= 0.0 {
        return (0, xi);
    }
    let j = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
    if j == 0 {
        return (0, xi);
    }
    let up = Binomial::new(j, 0.5).expect("valid binomial").sample(rng);
    (2 * up as i64 - j as i64, xi)
}
