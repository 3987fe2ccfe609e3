//! Small statistical toolkit shared by the estimators: sample means with
//! standard errors, ratio estimators, chi-square goodness of fit and the
//! Mann-Whitney rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided standard-normal quantile for confidence level `level`
/// (e.g. 0.95 -> 1.959964).
pub fn z_value(level: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(0.5 + level / 2.0)
}

pub fn normal_sf(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    1.0 - n.cdf(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se, n }
    }

    pub fn half_width(&self, level: f64) -> f64 {
        z_value(level) * self.se
    }

    /// |mean - target| measured in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.se
    }
}

/// Streaming mean/variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn estimate(&self) -> MeanEstimate {
        let se = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            f64::NAN
        };
        MeanEstimate { mean: self.mean, se, n: self.n }
    }
}

/// Ratio-of-means estimator `sum(y) / sum(x)` with a delta-method
/// standard error, used for "increment per unit time" over blocks.
pub fn ratio_estimate(y: &[f64], x: &[f64]) -> MeanEstimate {
    assert_eq!(y.len(), x.len());
    let n = y.len();
    let (sy, sx): (f64, f64) = (y.iter().sum(), x.iter().sum());
    let r = sy / sx;
    if n < 2 {
        return MeanEstimate { mean: r, se: f64::NAN, n };
    }
    let xbar = sx / n as f64;
    let resid_var = y
        .iter()
        .zip(x)
        .map(|(yi, xi)| (yi - r * xi).powi(2))
        .sum::<f64>()
        / (n - 1) as f64;
    MeanEstimate { mean: r, se: (resid_var / n as f64).sqrt() / xbar, n }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Pearson goodness of fit of `observed` counts against `probs` (which
/// must sum to one). `fitted_params` is subtracted from the degrees of
/// freedom.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], fitted_params: usize) -> ChiSquareTest {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let statistic = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum::<f64>();
    let df = observed.len() - 1 - fitted_params;
    let p_value = chi_square_sf(statistic, df);
    ChiSquareTest { statistic, df, p_value }
}

pub fn chi_square_uniform(observed: &[u64]) -> ChiSquareTest {
    let p = 1.0 / observed.len() as f64;
    chi_square_gof(observed, &vec![p; observed.len()], 0)
}

pub fn chi_square_sf(statistic: f64, df: usize) -> f64 {
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(statistic)
}

/// One-sided Mann-Whitney test of "`larger` tends to exceed `smaller`",
/// normal approximation with tie correction. Returns (U statistic for
/// `larger`, p-value).
pub fn mann_whitney_greater(smaller: &[f64], larger: &[f64]) -> (f64, f64) {
    let (n1, n2) = (smaller.len() as f64, larger.len() as f64);
    let mut pooled: Vec<(f64, bool)> = smaller
        .iter()
        .map(|&x| (x, false))
        .chain(larger.iter().map(|&x| (x, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for r in &mut ranks[i..=j] {
            *r = avg;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let rank_sum: f64 = pooled.iter().zip(&ranks).filter(|(p, _)| p.1).map(|(_, r)| r).sum();
    let u = rank_sum - n2 * (n2 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let nt = n1 + n2;
    let var = n1 * n2 / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)));
    let z = (u - mean - 0.5) / var.sqrt();
    (u, normal_sf(z))
}

/// Linear-interpolated quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
