//! Sample statistics and distributional distances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample set")]
    EmptySamples,
}

/// Per-(observable, time) summary over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// All samples, ascending.
    pub sorted: Vec<f64>,
    /// The same samples in replicate order, for split-half constructions.
    pub raw: Vec<f64>,
}

impl SampleSummary {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty());
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Self {
            count: n,
            mean,
            variance,
            std_error: (variance / n as f64).sqrt(),
            sorted,
            raw: samples,
        }
    }
}

/// First Wasserstein distance between two equal-size empirical distributions:
/// the mean absolute difference of order statistics. Unequal sizes are
/// bootstrap-resampled up to the larger count (deterministically, from the
/// given seed) and flagged.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    match wasserstein1_flagged(a, b, 0) {
        Ok((d, _)) => Ok(d),
        Err(e) => Err(e),
    }
}

pub fn wasserstein1_flagged(
    a: &[f64],
    b: &[f64],
    resample_seed: u64,
) -> Result<(f64, bool), StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    let mut sa: Vec<f64> = a.to_vec();
    let mut sb: Vec<f64> = b.to_vec();
    let mut resampled = false;
    if sa.len() != sb.len() {
        use rand::Rng;
        let target = sa.len().max(sb.len());
        let mut rng = crate::rng::stream(resample_seed, 0x5EED);
        for s in [&mut sa, &mut sb] {
            if s.len() < target {
                let src = s.clone();
                *s = (0..target)
                    .map(|_| src[rng.gen_range(0..src.len())])
                    .collect();
                resampled = true;
            }
        }
    }
    sa.sort_by(|x, y| x.total_cmp(y));
    sb.sort_by(|x, y| x.total_cmp(y));
    let d = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / sa.len() as f64;
    Ok((d, resampled))
}

/// Empirical probability mass function of integer-valued samples.
pub fn empirical_pmf(samples: &[i64]) -> BTreeMap<i64, f64> {
    let mut pmf = BTreeMap::new();
    for &s in samples {
        *pmf.entry(s).or_insert(0.0) += 1.0;
    }
    let n = samples.len() as f64;
    for v in pmf.values_mut() {
        *v /= n;
    }
    pmf
}

/// Total variation distance `½ Σ |p - q|` over the union support.
pub fn tv_distance(p: &BTreeMap<i64, f64>, q: &BTreeMap<i64, f64>) -> f64 {
    let mut keys: Vec<i64> = p.keys().chain(q.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    0.5 * keys
        .iter()
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// One-sample Kolmogorov–Smirnov statistic against a closed-form CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let c = cdf(x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let x = (sn + 0.12 + 0.11 / sn) * d;
    if x < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..101 {
        let kf = k as f64;
        let term = 2.0 * (-1.0f64).powi(k + 1) * (-2.0 * kf * kf * x * x).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}
