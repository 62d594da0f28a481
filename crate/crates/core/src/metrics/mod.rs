//! Distribution-level similarity and diversity measures over lateral paths.

mod distance;
mod dtw;
mod heatmap;
mod pca;
mod stats;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use distance::{bootstrap_summary, energy_distance, energy_distance_with, median_pairwise_distance, mmd, mmd_with, PairMetric};
pub use dtw::{dtw, mean_min_dtw};
pub use heatmap::{heatmap, jsd, kl_div, BBox, Histogram2D, HEATMAP_EPS};
pub use pca::{pca_project, Pca};
pub use stats::{regularized_incomplete_beta, student_t_sf, welch_t_test, Welch};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Real,
    Generated,
}

/// `n x d` matrix of flattened lateral paths.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    dim: usize,
    pub provenance: Provenance,
}

impl SampleSet {
    pub fn new(data: Vec<f64>, dim: usize, provenance: Provenance) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::ShapeMismatch("sample data is not a whole number of rows".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sample set contains non-finite values".into()));
        }
        Ok(Self { data, dim, provenance })
    }

    /// One row per path, `[lat0, lon0, lat1, lon1, ...]`.
    pub fn from_paths(paths: &[Vec<[f64; 2]>], provenance: Provenance) -> Result<Self> {
        let first = paths.first().ok_or(Error::EmptySet)?;
        let t = first.len();
        let mut data = Vec::with_capacity(paths.len() * t * 2);
        for p in paths {
            if p.len() != t {
                return Err(Error::DimMismatch(2 * t, 2 * p.len()));
            }
            data.extend(p.iter().flat_map(|q| q.iter().copied()));
        }
        Self::new(data, 2 * t, provenance)
    }

    pub fn from_rows(rows: &[Vec<f64>], provenance: Provenance) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptySet)?.len();
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimMismatch(dim, r.len()));
        }
        Self::new(rows.concat(), dim, provenance)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    /// Rows at the given indices, in order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { data, dim: self.dim, provenance: self.provenance }
    }
}

/// Whether within-set averages include self-pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    /// Biased, all pairs; never negative.
    #[default]
    V,
    /// Unbiased, self-pairs excluded.
    U,
}

/// Mean and spread of a metric over its units (bootstrap resamples or generated paths).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
    pub raw: Vec<f64>,
}

impl MetricSummary {
    pub fn from_values(name: &str, raw: Vec<f64>) -> Result<Self> {
        let n = raw.len();
        if n == 0 {
            return Err(Error::EmptySet);
        }
        let mean = raw.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            libm::sqrt(raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
        } else {
            0.0
        };
        Ok(Self { name: name.into(), mean, std, n, raw })
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn check_pair(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    if a.dim != b.dim {
        return Err(Error::DimMismatch(a.dim, b.dim));
    }
    Ok(())
}
