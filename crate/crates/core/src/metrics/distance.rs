use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_pair, euclidean, Estimator, MetricSummary, SampleSet};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Mean of `f` over cross pairs, and over within-set pairs of `a` with or without self-pairs.
fn cross_mean(a: &SampleSet, b: &SampleSet, f: &impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let mut s = 0.0;
    for x in a.rows() {
        for y in b.rows() {
            s += f(x, y);
        }
    }
    s / (a.len() * b.len()) as f64
}

fn within_mean(a: &SampleSet, est: Estimator, diag: f64, f: &impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += f(a.row(i), a.row(j));
        }
    }
    match est {
        Estimator::V => (2.0 * s + n as f64 * diag) / (n * n) as f64,
        Estimator::U if n > 1 => 2.0 * s / (n * (n - 1)) as f64,
        Estimator::U => diag,
    }
}

/// `2 E‖X − Y‖ − E‖X − X'‖ − E‖Y − Y'‖` (V-statistic).
pub fn energy_distance(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    energy_distance_with(a, b, Estimator::V)
}

pub fn energy_distance_with(a: &SampleSet, b: &SampleSet, est: Estimator) -> Result<f64> {
    check_pair(a, b)?;
    let xy = cross_mean(a, b, &euclidean);
    let xx = within_mean(a, est, 0.0, &euclidean);
    let yy = within_mean(b, est, 0.0, &euclidean);
    Ok(2.0 * xy - xx - yy)
}

/// Median of the pairwise distances over the pooled set (distinct pairs).
pub fn median_pairwise_distance(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    check_pair(a, b)?;
    let pooled: Vec<&[f64]> = a.rows().chain(b.rows()).collect();
    let mut d = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(euclidean(pooled[i], pooled[j]));
        }
    }
    if d.is_empty() {
        return Ok(0.0);
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    Ok(if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) })
}

/// Squared MMD with a Gaussian kernel. Without a bandwidth the median heuristic is used.
pub fn mmd(a: &SampleSet, b: &SampleSet, bandwidth: Option<f64>) -> Result<f64> {
    mmd_with(a, b, bandwidth, Estimator::V)
}

pub fn mmd_with(a: &SampleSet, b: &SampleSet, bandwidth: Option<f64>, est: Estimator) -> Result<f64> {
    check_pair(a, b)?;
    let sigma = match bandwidth {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(_) => return Err(Error::InvalidConfig("mmd bandwidth must be positive".into())),
        None => {
            let m = median_pairwise_distance(a, b)?;
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let k = move |x: &[f64], y: &[f64]| {
        let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
        libm::exp(-gamma * d2)
    };
    let xy = cross_mean(a, b, &k);
    let xx = within_mean(a, est, 1.0, &k);
    let yy = within_mean(b, est, 1.0, &k);
    Ok(xx + yy - 2.0 * xy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairMetric {
    EnergyDistance,
    Mmd,
}

impl PairMetric {
    pub fn name(self) -> &'static str {
        match self {
            PairMetric::EnergyDistance => "e_distance",
            PairMetric::Mmd => "mmd",
        }
    }

    pub fn eval(self, a: &SampleSet, b: &SampleSet) -> Result<f64> {
        match self {
            PairMetric::EnergyDistance => energy_distance(a, b),
            PairMetric::Mmd => mmd(a, b, None),
        }
    }
}

/// Metric over `n_boot` paired resamples (with replacement) of size `m` from each set.
/// `m` defaults to `min(|A|, |B|, 100)`.
pub fn bootstrap_summary(
    metric: PairMetric,
    a: &SampleSet,
    b: &SampleSet,
    n_boot: usize,
    m: Option<usize>,
    seed: u64,
) -> Result<MetricSummary> {
    check_pair(a, b)?;
    let cap = a.len().min(b.len());
    let m = m.unwrap_or(cap.min(100));
    if m == 0 || m > cap || n_boot == 0 {
        return Err(Error::InvalidConfig("bootstrap size must be in 1..=min(|A|, |B|) and n_boot >= 1".into()));
    }
    let mut rng = seeded(seed);
    let mut raw = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let ia: Vec<usize> = (0..m).map(|_| rng.random_range(0..a.len())).collect();
        let ib: Vec<usize> = (0..m).map(|_| rng.random_range(0..b.len())).collect();
        raw.push(metric.eval(&a.select(&ia), &b.select(&ib))?);
    }
    MetricSummary::from_values(metric.name(), raw)
}
