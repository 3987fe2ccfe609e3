//! Stationary transit rate through a tagged server when every server has an
//! infinite backlog and server positions are a uniformly random
//! permutation of the vertices.
//!
//! Three routes are offered: the closed form for regular graphs, exact
//! enumeration over the full symmetric group (rational arithmetic), and a
//! Monte-Carlo estimate over random permutations.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::graph::{GraphTopology, Vertex};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{z_value, MeanEstimate};

/// Largest vertex count accepted by [`brute_force_p`]; 10! * 10 terms.
pub const MAX_ENUMERATION_VERTICES: usize = 10;
pub const MIN_MC_SAMPLES: u64 = 10_000;
const MC_CHUNK: u64 = 16_384;

#[derive(Debug, Error, PartialEq)]
pub enum TransitError {
    #[error("closed form needs a regular graph; for non-regular graphs only p >= (|V|-(g+1))/|V| holds")]
    NotRegular,
    #[error("{0} vertices exceed the enumeration bound of {MAX_ENUMERATION_VERTICES}; use the Monte-Carlo estimate")]
    TooLarge(usize),
    #[error("destination map has {got} entries, graph has {expected} vertices")]
    BadDestinationMap { got: usize, expected: usize },
    #[error("tagged server {0} out of range")]
    BadTaggedServer(usize),
    #[error("at least {MIN_MC_SAMPLES} samples required (got {0})")]
    TooFewSamples(u64),
    #[error("lambda must be positive (got {0})")]
    NonPositiveLambda(f64),
}

/// Destination vertex per server index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DestinationMap(pub Vec<Vertex>);

impl DestinationMap {
    pub fn random<R: Rng + ?Sized>(vertex_count: usize, rng: &mut R) -> Self {
        Self((0..vertex_count).map(|_| rng.random_range(0..vertex_count)).collect())
    }

    pub fn identity(vertex_count: usize) -> Self {
        Self((0..vertex_count).collect())
    }

    fn check(&self, graph: &GraphTopology) -> Result<(), TransitError> {
        let n = graph.vertex_count();
        if self.0.len() != n || self.0.iter().any(|&d| d >= n) {
            return Err(TransitError::BadDestinationMap { got: self.0.len(), expected: n });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitMethod {
    ClosedForm,
    BruteForce,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitRateResult {
    pub method: TransitMethod,
    /// Exact value for the closed-form and brute-force routes.
    pub exact: Option<BigRational>,
    pub value: f64,
    pub samples: Option<u64>,
    /// 95% half-width, Monte-Carlo only.
    pub ci_half_width: Option<f64>,
    pub seed: Option<u64>,
}

impl TransitRateResult {
    fn exact(method: TransitMethod, value: BigRational) -> Self {
        Self {
            method,
            value: value.to_f64().unwrap_or(f64::NAN),
            exact: Some(value),
            samples: None,
            ci_half_width: None,
            seed: None,
        }
    }

    /// `{graph, method, value_num, value_den | estimate, ci, samples, seed}`.
    pub fn to_json(&self, graph_label: &str) -> serde_json::Value {
        let mut record = json!({
            "graph": graph_label,
            "method": self.method,
        });
        let obj = record.as_object_mut().expect("object literal");
        match &self.exact {
            Some(r) => {
                obj.insert("value_num".into(), json!(r.numer().to_string()));
                obj.insert("value_den".into(), json!(r.denom().to_string()));
                obj.insert("value".into(), json!(self.value));
            }
            None => {
                obj.insert("estimate".into(), json!(self.value));
                obj.insert("ci".into(), json!(self.ci_half_width));
                obj.insert("samples".into(), json!(self.samples));
                obj.insert("seed".into(), json!(self.seed));
            }
        }
        record
    }
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `(|V| - (g+1)) / |V|` for a connected g-regular graph. Reduces to
/// `(K-3)/K` on cycles and `(KL-5)/KL` on tori.
pub fn closed_form_p(graph: &GraphTopology) -> Result<BigRational, TransitError> {
    if !graph.is_regular() {
        return Err(TransitError::NotRegular);
    }
    let n = graph.vertex_count() as i64;
    let g = graph.degree() as i64;
    Ok(ratio(n - (g + 1), n))
}

/// The non-regular lower bound `(|V| - (g+1)) / |V|` with g the maximum
/// degree, clamped at zero.
pub fn lower_bound_p(graph: &GraphTopology) -> f64 {
    let n = graph.vertex_count() as f64;
    ((n - (graph.degree() as f64 + 1.0)) / n).max(0.0)
}

/// For every server `i` whose head customer (served at `perm[i]`, bound for
/// `dest[i]`) can land on the tagged server's node, bump `acc[|W|]`; such an
/// event carries weight `1/|W|` because ties between next hops split evenly.
fn accumulate_transits(
    graph: &GraphTopology,
    perm: &[Vertex],
    dest: &[Vertex],
    tagged: usize,
    acc: &mut [u64],
) {
    let target = perm[tagged];
    for (i, &u) in perm.iter().enumerate() {
        if i == tagged || graph.exits_on_service(u, dest[i]) {
            continue;
        }
        let mut size = 0usize;
        let mut hit = false;
        for w in graph.next_hops_unchecked(u, dest[i]) {
            size += 1;
            hit |= w == target;
        }
        if hit {
            acc[size] += 1;
        }
    }
}

fn sample_value(graph: &GraphTopology, perm: &[Vertex], dest: &[Vertex], tagged: usize) -> f64 {
    let mut acc = vec![0u64; graph.degree() + 1];
    accumulate_transits(graph, perm, dest, tagged, &mut acc);
    acc.iter().enumerate().skip(1).map(|(w, &c)| c as f64 / w as f64).sum()
}

/// Exact average over all `|V|!` placements and all servers of the
/// probability that a served customer transits onto the tagged server.
pub fn brute_force_p(
    graph: &GraphTopology,
    dest: &DestinationMap,
    tagged: usize,
) -> Result<BigRational, TransitError> {
    let n = graph.vertex_count();
    if n > MAX_ENUMERATION_VERTICES {
        return Err(TransitError::TooLarge(n));
    }
    dest.check(graph)?;
    if tagged >= n {
        return Err(TransitError::BadTaggedServer(tagged));
    }
    let mut acc = vec![0u64; graph.degree() + 1];
    for_each_permutation(n, |perm| accumulate_transits(graph, perm, &dest.0, tagged, &mut acc));

    let factorial: i64 = (1..=n as i64).product();
    let mut total = BigRational::zero();
    for (w, &count) in acc.iter().enumerate().skip(1) {
        total += ratio(count as i64, w as i64);
    }
    Ok(total / BigRational::from_integer(BigInt::from(factorial)))
}

/// Visit every permutation of `0..n` (Heap's algorithm, iterative).
pub fn for_each_permutation<F: FnMut(&[usize])>(n: usize, mut visit: F) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Monte-Carlo estimate over uniform random placements. Samples are drawn
/// in fixed-size chunks, each with its own derived seed, and combined in
/// chunk order so the result is independent of thread scheduling.
pub fn monte_carlo_p(
    graph: &GraphTopology,
    dest: &DestinationMap,
    samples: u64,
    seed: u64,
) -> Result<TransitRateResult, TransitError> {
    if samples < MIN_MC_SAMPLES {
        return Err(TransitError::TooFewSamples(samples));
    }
    dest.check(graph)?;
    let n = graph.vertex_count();
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut rng = rng_from_seed(derive_seed(seed, c));
            let mut perm: Vec<Vertex> = (0..n).collect();
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                perm.shuffle(&mut rng);
                let x = sample_value(graph, &perm, &dest.0, 0);
                s += x;
                s2 += x * x;
            }
            (s, s2)
        })
        .collect();
    let (sum, sum_sq) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let m = samples as f64;
    let mean = sum / m;
    let var = (sum_sq - m * mean * mean) / (m - 1.0);
    let est = MeanEstimate { mean, se: (var.max(0.0) / m).sqrt(), n: samples as usize };
    Ok(TransitRateResult {
        method: TransitMethod::MonteCarlo,
        exact: None,
        value: est.mean,
        samples: Some(samples),
        ci_half_width: Some(est.se * z_value(0.95)),
        seed: Some(seed),
    })
}

pub fn closed_form_result(graph: &GraphTopology) -> Result<TransitRateResult, TransitError> {
    closed_form_p(graph).map(|r| TransitRateResult::exact(TransitMethod::ClosedForm, r))
}

pub fn brute_force_result(
    graph: &GraphTopology,
    dest: &DestinationMap,
    tagged: usize,
) -> Result<TransitRateResult, TransitError> {
    brute_force_p(graph, dest, tagged).map(|r| TransitRateResult::exact(TransitMethod::BruteForce, r))
}

/// Critical network size `(g+1)/lambda` above which the finite network is
/// transient.
pub fn critical_size(lambda: f64, degree: usize) -> Result<f64, TransitError> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(TransitError::NonPositiveLambda(lambda));
    }
    Ok((degree as f64 + 1.0) / lambda)
}
