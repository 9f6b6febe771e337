//! Nonparametric cohort comparison: Mann-Whitney U, Cliff's delta and
//! Benjamini-Hochberg adjustment.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("p-value {0} outside [0, 1]")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::EmptySample);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(Sample(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = StatsError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Sample::new(v)
    }
}

/// Alternative hypothesis, phrased for the first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sided {
    OneSidedGreater,
    OneSidedLess,
    TwoSided,
}

impl Sided {
    fn flipped(self) -> Self {
        match self {
            Sided::OneSidedGreater => Sided::OneSidedLess,
            Sided::OneSidedLess => Sided::OneSidedGreater,
            Sided::TwoSided => Sided::TwoSided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PValueMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    /// U statistic of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub sided: Sided,
    pub method: PValueMethod,
}

/// Largest smaller-group size for which p-values are computed exactly.
pub const EXACT_MAX_GROUP: usize = 8;

/// Midranks (1-based) of the pooled values, doubled so they are integers.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share rank (start+1+end)/2.
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        start = end;
    }
    ranks
}

/// Sizes of tie groups in the pooled sample.
fn tie_sizes(pooled: &[f64]) -> Vec<usize> {
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        out.push(j - i);
        i = j;
    }
    out
}

pub fn mann_whitney(a: &Sample, b: &Sample, sided: Sided) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n, m) = (a.len(), b.len());
    let pooled: Vec<f64> = a.values().iter().chain(b.values()).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let rank_sum_a2: u64 = ranks[..n].iter().sum();
    let u = rank_sum_a2 as f64 / 2.0 - (n * (n + 1)) as f64 / 2.0;

    let (p_value, method) = if n.min(m) <= EXACT_MAX_GROUP {
        let p = if n <= m {
            exact_p(&ranks, n, rank_sum_a2, sided)
        } else {
            let rank_sum_b2: u64 = ranks[n..].iter().sum();
            exact_p(&ranks, m, rank_sum_b2, sided.flipped())
        };
        (p, PValueMethod::Exact)
    } else {
        (
            normal_p(u, n, m, &tie_sizes(&pooled), sided),
            PValueMethod::NormalApproximation,
        )
    };
    Ok(TestResult {
        statistic: u,
        p_value: p_value.clamp(0.0, 1.0),
        sided,
        method,
    })
}

/// Permutation p-value of a doubled rank sum over all size-`k` subsets of
/// the pooled ranks, counted by dynamic programming over rank sums.
fn exact_p(ranks: &[u64], k: usize, observed: u64, sided: Sided) -> f64 {
    let max_sum: u64 = {
        let mut sorted = ranks.to_vec();
        sorted.sort_unstable_by(|x, y| y.cmp(x));
        sorted[..k].iter().sum()
    };
    let width = max_sum as usize + 1;
    // counts[j][s]: subsets of size j with doubled rank sum s.
    let mut counts = vec![vec![0f64; width]; k + 1];
    counts[0][0] = 1.0;
    for &r in ranks {
        let r = r as usize;
        for j in (1..=k).rev() {
            let (lower, upper) = counts.split_at_mut(j);
            let (src, dst) = (&lower[j - 1], &mut upper[0]);
            for s in (r..width).rev() {
                if src[s - r] != 0.0 {
                    dst[s] += src[s - r];
                }
            }
        }
    }
    let dist = &counts[k];
    let total: f64 = dist.iter().sum();
    // Expected doubled rank sum: k·(N+1).
    let centre = (k * (ranks.len() + 1)) as i64;
    let obs = observed as i64;
    let hits: f64 = dist
        .iter()
        .enumerate()
        .filter(|&(s, &c)| {
            c != 0.0 && {
                let s = s as i64;
                match sided {
                    Sided::OneSidedGreater => s >= obs,
                    Sided::OneSidedLess => s <= obs,
                    Sided::TwoSided => (s - centre).abs() >= (obs - centre).abs(),
                }
            }
        })
        .map(|(_, &c)| c)
        .sum();
    hits / total
}

fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
fn normal_p(u: f64, n: usize, m: usize, ties: &[usize], sided: Sided) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let big_n = nf + mf;
    let tie_term: f64 =
        ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (big_n * (big_n - 1.0));
    let variance = nf * mf / 12.0 * ((big_n + 1.0) - tie_term);
    if variance <= 0.0 {
        return 1.0;
    }
    let sd = variance.sqrt();
    let mean = nf * mf / 2.0;
    match sided {
        Sided::OneSidedGreater => upper_tail((u - mean - 0.5) / sd),
        Sided::OneSidedLess => upper_tail((mean - u - 0.5) / sd),
        Sided::TwoSided => {
            let z = ((u - mean).abs() - 0.5).max(0.0) / sd;
            (2.0 * upper_tail(z)).min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

/// Upper bounds (exclusive) of |delta| for each magnitude label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliffThresholds {
    pub negligible: f64,
    pub small: f64,
    pub medium: f64,
}

impl Default for CliffThresholds {
    fn default() -> Self {
        CliffThresholds {
            negligible: 0.147,
            small: 0.33,
            medium: 0.474,
        }
    }
}

impl CliffThresholds {
    pub fn classify(&self, delta: f64) -> Magnitude {
        let d = delta.abs();
        if d < self.negligible {
            Magnitude::Negligible
        } else if d < self.small {
            Magnitude::Small
        } else if d < self.medium {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectSize {
    pub delta: f64,
    pub magnitude: Magnitude,
}

pub fn cliffs_delta(a: &Sample, b: &Sample) -> EffectSize {
    cliffs_delta_with(a, b, &CliffThresholds::default())
}

pub fn cliffs_delta_with(a: &Sample, b: &Sample, cuts: &CliffThresholds) -> EffectSize {
    let mut sorted_b = b.values().to_vec();
    sorted_b.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &x in a.values() {
        let below = sorted_b.partition_point(|&y| y < x) as i64;
        let not_above = sorted_b.partition_point(|&y| y <= x) as i64;
        let above = sorted_b.len() as i64 - not_above;
        dominance += below - above;
    }
    let delta = dominance as f64 / (a.len() * b.len()) as f64;
    EffectSize {
        delta,
        magnitude: cuts.classify(delta),
    }
}

/// Step-up false-discovery-rate adjustment; output keeps input order.
pub fn benjamini_hochberg(p_values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::OutOfRange(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &idx) in order.iter().enumerate().rev() {
        let rank = (pos + 1) as f64;
        running = running.min(p_values[idx] * m as f64 / rank);
        // m / rank >= 1, but the product can round below p itself.
        adjusted[idx] = running.max(p_values[idx]).min(1.0);
    }
    Ok(adjusted)
}
