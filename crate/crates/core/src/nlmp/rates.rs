use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::absorption::absorption_times;
use super::chain::{build_chain, stationary_q, StationaryLaw};
use super::tau::tau_distribution;
use super::{check_beta, NlmpError};

/// L1 tolerance of the stationary solve.
pub const STATIONARY_TOL: f64 = 1e-13;
/// Truncation is doubled until `lambda` moves by less than this.
pub const DOUBLING_TOL: f64 = 1e-9;
const MAX_DOUBLINGS: usize = 8;

/// Self-consistent rates for a queue load `eta`: exogenous rate `lambda`
/// and transit inflow `nu_k` of customers whose server sits at offset `k`
/// from their destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub lambda: f64,
    /// Stationary law of the single-particle chain on `{-M..M}`.
    pub q: Vec<f64>,
    /// `nu_k = eta q_k` for `k != 0` (entries below 1e-300 omitted).
    pub nu: BTreeMap<i64, f64>,
    /// Change in `lambda` over the last truncation doubling.
    pub truncation_delta: f64,
}

impl RateProfile {
    pub fn q_at(&self, k: i64) -> f64 {
        let m = self.m as i64;
        if k.abs() > m {
            0.0
        } else {
            self.q[(k + m) as usize]
        }
    }

    pub fn nu_at(&self, k: i64) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.eta * self.q_at(k)
        }
    }

    pub fn total_nu(&self) -> f64 {
        self.eta * (1.0 - self.q_at(0))
    }

    /// Arrival rate of customers of type `k` (`lambda` for `k = 0`).
    pub fn inflow(&self, k: i64) -> f64 {
        self.eta * self.q_at(k)
    }
}

fn check_eta(eta: f64) -> Result<(), NlmpError> {
    if eta > 0.0 && eta < 1.0 {
        Ok(())
    } else {
        Err(NlmpError::InvalidEta(eta))
    }
}

fn solve_at(beta: f64, gamma: f64, extra: usize) -> Result<StationaryLaw, NlmpError> {
    let tau = tau_distribution(beta, gamma, 0)?;
    let m = tau.m + 2 + extra;
    let chain = build_chain(tau, m)?;
    stationary_q(&chain, STATIONARY_TOL)
}

/// The fixed point: `lambda = eta q_0` and `nu_k = eta q_k`, with `q` the
/// stationary law of the single-particle chain at `gamma = 1 - eta`. The
/// truncation starts at a few diffusion lengths `beta / gamma` and doubles
/// until `lambda` is stable.
pub fn rates_from_eta(eta: f64, beta: f64) -> Result<RateProfile, NlmpError> {
    check_eta(eta)?;
    check_beta(beta)?;
    let gamma = 1.0 - eta;
    let mut extra = (8.0 * beta / gamma).ceil() as usize + 16;
    let mut law = solve_at(beta, gamma, extra)?;
    let mut delta = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        extra *= 2;
        let finer = solve_at(beta, gamma, extra)?;
        delta = (finer.prob(0) - law.prob(0)).abs() * eta;
        law = finer;
        if delta < DOUBLING_TOL {
            break;
        }
    }
    let m = law.m as i64;
    let nu = (-m..=m)
        .filter(|&k| k != 0)
        .map(|k| (k, eta * law.prob(k)))
        .filter(|&(_, v)| v > 1e-300)
        .collect();
    Ok(RateProfile {
        eta,
        beta,
        gamma,
        m: law.m,
        lambda: eta * law.prob(0),
        q: law.q,
        nu,
        truncation_delta: delta,
    })
}

/// `lambda(eta) = eta / E[N]` with `E[N] = gamma T(0)` from the absorption
/// solve at `gamma = 1 - eta`. Defined as 0 at both endpoints.
pub fn lambda_at(eta: f64, beta: f64) -> Result<f64, NlmpError> {
    check_beta(beta)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(NlmpError::InvalidEta(eta));
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    if eta == 1.0 {
        return Ok(if beta == 0.0 { 1.0 } else { 0.0 });
    }
    // Static servers: every customer leaves at its first service. Skip the
    // solve, whose gamma * (1 / gamma) need not round to exactly 1.
    if beta == 0.0 {
        return Ok(eta);
    }
    let model = absorption_times(beta, 1.0 - eta, 2)?;
    Ok(eta / model.expected_visits)
}

/// `(eta, lambda(eta))` over a grid strictly inside `(0, 1)`.
pub fn lambda_of_eta(eta_grid: &[f64], beta: f64) -> Result<Vec<(f64, f64)>, NlmpError> {
    eta_grid
        .iter()
        .map(|&eta| {
            check_eta(eta)?;
            Ok((eta, lambda_at(eta, beta)?))
        })
        .collect()
}

/// `n` equally spaced points `i / (n + 1)`, `i = 1..=n`.
pub fn uniform_eta_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaRoots {
    pub lambda_target: f64,
    /// Maximum of `lambda(eta)` over `(0, 1)`.
    pub lambda_plus: f64,
    pub eta_peak: f64,
    /// `(eta_minus, eta_plus)`, or `None` when the target is at or above
    /// `lambda_plus`.
    pub roots: Option<(f64, f64)>,
    /// `max |lambda(eta_pm) - lambda_target|`.
    pub max_abs_error: f64,
}

/// Location and value of the maximum of `lambda(eta)`: grid scan followed
/// by golden-section refinement.
pub fn curve_maximum(beta: f64) -> Result<(f64, f64), NlmpError> {
    check_beta(beta)?;
    if beta == 0.0 {
        return Ok((1.0, 1.0));
    }
    let grid = 4000;
    let mut best = (0.0, 0.0);
    for i in 1..grid {
        let eta = i as f64 / grid as f64;
        let l = lambda_at(eta, beta)?;
        if l > best.1 {
            best = (eta, l);
        }
    }
    let h = 1.0 / grid as f64;
    let (mut a, mut b) = ((best.0 - h).max(0.0), (best.0 + h).min(1.0));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (lambda_at(c, beta)?, lambda_at(d, beta)?);
    while b - a > 1e-13 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = lambda_at(c, beta)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = lambda_at(d, beta)?;
        }
    }
    let eta = 0.5 * (a + b);
    Ok((eta, lambda_at(eta, beta)?))
}

fn bisect(beta: f64, target: f64, mut lo: f64, mut hi: f64, increasing: bool) -> Result<f64, NlmpError> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let below = lambda_at(mid, beta)? < target;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The two loads `eta_- < eta_peak < eta_+` with `lambda(eta) = lambda_target`.
pub fn find_eta_roots(lambda_target: f64, beta: f64) -> Result<EtaRoots, NlmpError> {
    if !(lambda_target > 0.0 && lambda_target.is_finite()) {
        return Err(NlmpError::InvalidLambda(lambda_target));
    }
    if !(beta > 0.0) {
        return Err(NlmpError::InvalidParameter(format!(
            "two equilibria need beta > 0 (got {beta})"
        )));
    }
    let (eta_peak, lambda_plus) = curve_maximum(beta)?;
    if lambda_target >= lambda_plus {
        return Ok(EtaRoots { lambda_target, lambda_plus, eta_peak, roots: None, max_abs_error: f64::NAN });
    }
    let lo = bisect(beta, lambda_target, 0.0, eta_peak, true)?;
    let hi = bisect(beta, lambda_target, eta_peak, 1.0, false)?;
    let err = (lambda_at(lo, beta)? - lambda_target)
        .abs()
        .max((lambda_at(hi, beta)? - lambda_target).abs());
    Ok(EtaRoots { lambda_target, lambda_plus, eta_peak, roots: Some((lo, hi)), max_abs_error: err })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuQuadraticRoots {
    /// `(1 - lambda)^2 - (8/3) lambda beta`.
    pub discriminant: f64,
    /// `(nu_minus, nu_plus)` when the discriminant is nonnegative.
    pub roots: Option<(f64, f64)>,
}

/// Roots of `3 nu^2 - 3 nu (1 - lambda) + 2 lambda beta = 0`, the large-beta
/// reduction of the load balance.
pub fn nu_quadratic_roots(lambda: f64, beta: f64) -> Result<NuQuadraticRoots, NlmpError> {
    if !(lambda > 0.0) {
        return Err(NlmpError::InvalidLambda(lambda));
    }
    if !(beta > 0.0) {
        return Err(NlmpError::InvalidBeta(beta));
    }
    let a = 1.0 - lambda;
    let discriminant = a * a - 8.0 / 3.0 * lambda * beta;
    // Rounding can push an exact double root slightly negative.
    let roots = (discriminant >= -1e-14).then(|| {
        let s = discriminant.max(0.0).sqrt();
        // The smaller root via the product of roots avoids cancellation.
        let plus = (a + s) / 2.0;
        let minus = if plus > 0.0 { 2.0 * lambda * beta / (3.0 * plus) } else { (a - s) / 2.0 };
        (minus, plus)
    });
    Ok(NuQuadraticRoots { discriminant, roots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlmp::absorption::expected_visits;

    #[test]
    fn no_swaps_gives_independent_queues() {
        let p = rates_from_eta(0.4, 0.0).unwrap();
        assert_eq!(p.lambda, 0.4);
        assert!(p.nu.is_empty());
        for eta in uniform_eta_grid(49) {
            assert_eq!(lambda_at(eta, 0.0).unwrap(), eta);
        }
    }

    #[test]
    fn profile_identities() {
        let p = rates_from_eta(0.5, 1.0).unwrap();
        let total: f64 = p.lambda + p.nu.values().sum::<f64>();
        assert!((total - 0.5).abs() < 1e-10);
        for (&k, &v) in &p.nu {
            assert!((v - p.nu[&-k]).abs() < 1e-15);
        }
        let en = expected_visits(1.0, 0.5).unwrap();
        assert!((p.lambda - 0.5 / en).abs() < 1e-6);
        assert!((p.lambda - lambda_at(0.5, 1.0).unwrap()).abs() < 1e-6);
        assert!(p.truncation_delta < DOUBLING_TOL);
    }

    #[test]
    fn q0_times_visits_is_one() {
        for &beta in &[0.5, 1.0, 2.0] {
            for &gamma in &[0.1, 0.3, 0.5, 0.9] {
                let p = rates_from_eta(1.0 - gamma, beta).unwrap();
                let en = expected_visits(beta, gamma).unwrap();
                assert!((p.q_at(0) * en - 1.0).abs() < 1e-6, "beta {beta} gamma {gamma}");
            }
        }
    }

    #[test]
    fn rejects_eta_outside_unit_interval() {
        assert_eq!(rates_from_eta(1.0, 1.0).unwrap_err(), NlmpError::InvalidEta(1.0));
        assert!(lambda_of_eta(&[0.0], 1.0).is_err());
    }

    #[test]
    fn curve_shape() {
        assert!(lambda_at(0.001, 1.0).unwrap() < 0.002);
        assert!(lambda_at(0.99, 1.0).unwrap() < lambda_at(0.5, 1.0).unwrap());
        let curve = lambda_of_eta(&uniform_eta_grid(99), 1.0).unwrap();
        assert_eq!(curve.len(), 99);
        assert!(curve.iter().all(|&(e, l)| l > 0.0 && l <= e));
        let jump = |n: usize| {
            let c = lambda_of_eta(&uniform_eta_grid(n), 1.0).unwrap();
            c.windows(2).map(|w| (w[1].1 - w[0].1).abs()).fold(0.0, f64::max)
        };
        assert!(jump(999) < jump(99));
    }

    #[test]
    fn two_roots_for_small_lambda() {
        let r = find_eta_roots(0.001, 1.0).unwrap();
        let (lo, hi) = r.roots.unwrap();
        assert!(lo < 0.01 && hi > 0.9 && lo < r.eta_peak && r.eta_peak < hi);
        assert!(r.max_abs_error < 1e-8);
        let none = find_eta_roots(r.lambda_plus * 1.01, 1.0).unwrap();
        assert!(none.roots.is_none());
    }

    #[test]
    fn quadratic_roots() {
        let q = nu_quadratic_roots(0.01, 1.0).unwrap();
        let (lo, hi) = q.roots.unwrap();
        assert!((lo - 0.00678).abs() < 5e-5 && (hi - 0.98322).abs() < 5e-5, "{q:?}");
        for nu in [lo, hi] {
            assert!((3.0 * nu * nu - 3.0 * nu * 0.99 + 0.02).abs() < 1e-12);
        }
        assert!(0.0 < lo && lo < hi && hi < 0.99);
        // Discriminant zero: (1 - l)^2 = (8/3) l beta.
        let lambda = 0.25;
        let beta = 0.5625 / (8.0 / 3.0 * lambda);
        let d = nu_quadratic_roots(lambda, beta).unwrap();
        let (a, b) = d.roots.unwrap();
        assert!((a - 0.375).abs() < 1e-7 && (b - 0.375).abs() < 1e-7);
        assert!(nu_quadratic_roots(0.5, 1.0).unwrap().roots.is_none());
    }
}
