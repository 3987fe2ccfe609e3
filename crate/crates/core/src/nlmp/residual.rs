//! Simulation check that a rate profile is a fixed point: a single FIFO
//! queue fed by the profile's typed arrivals, whose customers all shift
//! type together at rate `beta` per direction.

use std::collections::{HashMap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rates::RateProfile;
use super::NlmpError;
use crate::rng::rng_from_seed;
use crate::stats::{chi_square_gof, z_value, ChiSquareTest, MeanEstimate};

/// Longest queue whose full type sequence is tracked.
const TRACKED_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualOptions {
    /// Simulated time.
    pub horizon: f64,
    pub batches: usize,
    /// Time between queue-length samples for the geometric test.
    pub sample_spacing: f64,
    /// States need at least this many entries to be checked.
    pub min_visits: u64,
    /// Largest `|k|` in the head-type check.
    pub max_offset: i64,
    pub seed: u64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { horizon: 2e6, batches: 40, sample_spacing: 50.0, min_visits: 100, max_offset: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTypeCheck {
    pub k: i64,
    /// Fraction of time the head customer has type `k + sign(k)`.
    pub empirical: MeanEstimate,
    /// `eta q_k`.
    pub target: f64,
}

impl HeadTypeCheck {
    pub fn z(&self) -> f64 {
        self.empirical.z_score(self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResidual {
    /// Types from head to tail.
    pub state: Vec<i64>,
    pub visits: u64,
    pub occupancy: f64,
    /// Balance residual averaged over batches.
    pub residual: MeanEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub eta: f64,
    pub beta: f64,
    pub events: u64,
    pub queue_length: ChiSquareTest,
    pub length_counts: Vec<u64>,
    pub head_types: Vec<HeadTypeCheck>,
    /// `max_k |empirical - eta q_k|`.
    pub head_type_max_discrepancy: f64,
    pub head_type_max_z: f64,
    pub states: Vec<StateResidual>,
    pub residual_max_abs: f64,
    pub residual_max_z: f64,
    /// Two-sided 1% Bonferroni threshold over the checked states.
    pub residual_z_threshold: f64,
}

impl FixedPointReport {
    pub fn head_types_within(&self, z: f64) -> bool {
        self.head_types.iter().all(|h| h.z() <= z)
    }

    pub fn residuals_within_noise(&self) -> bool {
        self.residual_max_z <= self.residual_z_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    len: u8,
    types: [i16; TRACKED_LEN],
}

impl Key {
    fn from_iter(it: impl Iterator<Item = i64>) -> Self {
        let mut key = Key { len: 0, types: [0; TRACKED_LEN] };
        for t in it {
            key.types[key.len as usize] = t as i16;
            key.len += 1;
        }
        key
    }

    fn types(&self) -> &[i16] {
        &self.types[..self.len as usize]
    }

    fn shifted(&self, d: i16) -> Self {
        let mut k = *self;
        for t in &mut k.types[..k.len as usize] {
            *t += d;
        }
        k
    }

    fn without_last(&self) -> Self {
        let mut k = *self;
        k.len -= 1;
        k.types[k.len as usize] = 0;
        k
    }

    fn tail(&self) -> Self {
        Key::from_iter(self.types()[1..].iter().map(|&t| t as i64))
    }
}

struct Tracker {
    index: HashMap<Key, usize>,
    keys: Vec<Key>,
    visits: Vec<u64>,
    /// `time[state][batch]`.
    time: Vec<Vec<f64>>,
    batches: usize,
}

impl Tracker {
    fn slot(&mut self, key: Key) -> usize {
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.keys.len();
        self.index.insert(key, i);
        self.keys.push(key);
        self.visits.push(0);
        self.time.push(vec![0.0; self.batches]);
        i
    }

    fn occupancy(&self, key: &Key, batch: usize) -> f64 {
        self.index.get(key).map_or(0.0, |&i| self.time[i][batch])
    }
}

/// Simulate the single queue driven by `profile` and compare it with the
/// fixed-point equations: geometric queue length, head-type frequencies
/// against `eta q_k`, and the stationary balance of every frequently
/// visited short state.
pub fn fixed_point_residual(profile: &RateProfile, options: ResidualOptions) -> Result<FixedPointReport, NlmpError> {
    let eta = profile.eta;
    let beta = profile.beta;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(NlmpError::InvalidEta(eta));
    }
    if options.batches < 2 || !(options.horizon > 0.0) || !(options.sample_spacing > 0.0) {
        return Err(NlmpError::InvalidParameter("need horizon > 0, spacing > 0 and >= 2 batches".into()));
    }
    let m = profile.m as i64;
    let types: Vec<i64> = (-m..=m).collect();
    let weights: Vec<f64> = types.iter().map(|&k| profile.inflow(k)).collect();
    let pick = WeightedIndex::new(&weights)
        .map_err(|e| NlmpError::InvalidParameter(format!("profile weights: {e}")))?;

    let mut rng = rng_from_seed(options.seed);
    let batch_len = options.horizon / options.batches as f64;
    let span = options.max_offset + 1;
    // head_time[j + span][batch] for head types |j| <= span.
    let mut head_time = vec![vec![0.0; options.batches]; (2 * span + 1) as usize];
    let mut tracker = Tracker {
        index: HashMap::new(),
        keys: Vec::new(),
        visits: Vec::new(),
        time: Vec::new(),
        batches: options.batches,
    };
    let mut length_counts: Vec<u64> = Vec::new();

    // Stored types are relative to a global offset shared by the queue.
    let mut queue: VecDeque<i64> = VecDeque::new();
    let mut offset = 0i64;
    let mut now = 0.0;
    let mut next_sample = options.sample_spacing;
    let mut events = 0u64;
    let current_key = |q: &VecDeque<i64>, off: i64| {
        (q.len() <= TRACKED_LEN).then(|| Key::from_iter(q.iter().map(|&t| t + off)))
    };
    let mut key = current_key(&queue, offset);
    let mut slot = key.map(|k| tracker.slot(k));
    if let Some(s) = slot {
        tracker.visits[s] += 1;
    }

    while now < options.horizon {
        let busy = !queue.is_empty();
        let total = eta + if busy { 1.0 } else { 0.0 } + 2.0 * beta;
        let dt = -(1.0 - rng.random::<f64>()).ln() / total;
        let end = (now + dt).min(options.horizon);
        // Credit [now, end) to the current state, split at batch boundaries.
        let mut t = now;
        while t < end {
            let b = ((t / batch_len) as usize).min(options.batches - 1);
            let until = ((b + 1) as f64 * batch_len).min(end);
            let piece = until - t;
            if let Some(s) = slot {
                tracker.time[s][b] += piece;
            }
            if let Some(&head) = queue.front() {
                let h = head + offset;
                if h.abs() <= span {
                    head_time[(h + span) as usize][b] += piece;
                }
            }
            t = until;
        }
        while next_sample <= end {
            let l = queue.len();
            if length_counts.len() <= l {
                length_counts.resize(l + 1, 0);
            }
            length_counts[l] += 1;
            next_sample += options.sample_spacing;
        }
        now = end;
        if now >= options.horizon {
            break;
        }
        events += 1;
        let u = rng.random::<f64>() * total;
        if u < eta {
            queue.push_back(types[pick.sample(&mut rng)] - offset);
        } else if u < eta + 2.0 * beta {
            // Swaps change every customer's type together.
            offset += if u < eta + beta { 1 } else { -1 };
        } else {
            queue.pop_front();
        }
        key = current_key(&queue, offset);
        slot = key.map(|k| tracker.slot(k));
        if let Some(s) = slot {
            tracker.visits[s] += 1;
        }
    }

    let queue_length = geometric_test(&length_counts, eta);
    let per_batch = |x: &[f64]| -> MeanEstimate {
        let v: Vec<f64> = x.iter().map(|t| t / batch_len).collect();
        MeanEstimate::from_samples(&v)
    };

    let mut head_types = Vec::new();
    for k in (-options.max_offset..=options.max_offset).filter(|&k| k != 0) {
        let head = k + k.signum();
        let empirical = per_batch(&head_time[(head + span) as usize]);
        head_types.push(HeadTypeCheck { k, empirical, target: profile.nu_at(k) });
    }
    let head_type_max_discrepancy =
        head_types.iter().map(|h| (h.empirical.mean - h.target).abs()).fold(0.0, f64::max);
    let head_type_max_z = head_types.iter().map(HeadTypeCheck::z).fold(0.0, f64::max);

    // Sum over k of mu(k, n), per batch, keyed by n.
    let mut prepended: HashMap<Key, Vec<f64>> = HashMap::new();
    for (i, key) in tracker.keys.iter().enumerate() {
        if key.len >= 1 {
            let acc = prepended.entry(key.tail()).or_insert_with(|| vec![0.0; options.batches]);
            for b in 0..options.batches {
                acc[b] += tracker.time[i][b];
            }
        }
    }
    let mut states = Vec::new();
    for (i, key) in tracker.keys.iter().enumerate() {
        if (key.len as usize) >= TRACKED_LEN || tracker.visits[i] < options.min_visits {
            continue;
        }
        let l = key.len as usize;
        let residuals: Vec<f64> = (0..options.batches)
            .map(|b| {
                let mu = |k: &Key| tracker.occupancy(k, b) / batch_len;
                let here = tracker.time[i][b] / batch_len;
                let mut r = -here * eta;
                if l > 0 {
                    let last = key.types[l - 1] as i64;
                    r += mu(&key.without_last()) * profile.inflow(last);
                    r -= here;
                    r += beta * (mu(&key.shifted(1)) + mu(&key.shifted(-1)) - 2.0 * here);
                }
                r += prepended.get(key).map_or(0.0, |v| v[b]) / batch_len;
                r
            })
            .collect();
        states.push(StateResidual {
            state: key.types().iter().map(|&t| t as i64).collect(),
            visits: tracker.visits[i],
            occupancy: tracker.time[i].iter().sum::<f64>() / options.horizon,
            residual: MeanEstimate::from_samples(&residuals),
        });
    }
    states.sort_by(|a, b| (a.state.len(), &a.state).cmp(&(b.state.len(), &b.state)));
    if states.is_empty() {
        return Err(NlmpError::InsufficientData("no state reached the visit threshold".into()));
    }
    let residual_max_abs = states.iter().map(|s| s.residual.mean.abs()).fold(0.0, f64::max);
    let residual_max_z = states
        .iter()
        .map(|s| if s.residual.se > 0.0 { s.residual.z_score(0.0) } else if s.residual.mean.abs() < 1e-12 { 0.0 } else { f64::INFINITY })
        .fold(0.0, f64::max);
    // Two-sided 1% family-wise level.
    let residual_z_threshold = z_value(1.0 - 0.01 / states.len() as f64);

    Ok(FixedPointReport {
        eta,
        beta,
        events,
        queue_length,
        length_counts,
        head_types,
        head_type_max_discrepancy,
        head_type_max_z,
        states,
        residual_max_abs,
        residual_max_z,
        residual_z_threshold,
    })
}

/// Chi-square of sampled queue lengths against `P(L = l) = (1 - eta) eta^l`,
/// pooling the tail once expected counts drop below 5.
pub fn geometric_test(counts: &[u64], eta: f64) -> ChiSquareTest {
    let n: u64 = counts.iter().sum();
    let mut observed = Vec::new();
    let mut probs = Vec::new();
    let mut l = 0usize;
    loop {
        let p = (1.0 - eta) * eta.powi(l as i32);
        let tail = eta.powi(l as i32 + 1);
        if tail * n as f64 >= 5.0 {
            observed.push(counts.get(l).copied().unwrap_or(0));
            probs.push(p);
            l += 1;
        } else {
            observed.push(counts.iter().skip(l).sum());
            probs.push(eta.powi(l as i32));
            break;
        }
    }
    chi_square_gof(&observed, &probs, 0)
}
