use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Laplace smoothing mass added to every cell before normalization.
pub const HEATMAP_EPS: f64 = 1e-9;

/// Lateral bounding box; first coordinate is latitude, second longitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn from_paths(paths: &[Vec<[f64; 2]>]) -> Result<Self> {
        let mut b = BBox {
            lat_min: f64::INFINITY,
            lat_max: f64::NEG_INFINITY,
            lon_min: f64::INFINITY,
            lon_max: f64::NEG_INFINITY,
        };
        for p in paths.iter().flatten() {
            b.lat_min = b.lat_min.min(p[0]);
            b.lat_max = b.lat_max.max(p[0]);
            b.lon_min = b.lon_min.min(p[1]);
            b.lon_max = b.lon_max.max(p[1]);
        }
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if self.lat_max > self.lat_min && self.lon_max > self.lon_min && self.lat_max.is_finite() && self.lon_max.is_finite() {
            Ok(())
        } else {
            Err(Error::DegenerateBBox)
        }
    }

    fn bin(v: f64, lo: f64, hi: f64, g: usize) -> usize {
        let f = libm::floor((v - lo) / (hi - lo) * g as f64);
        if f.is_nan() || f < 0.0 {
            0
        } else {
            (f as usize).min(g - 1)
        }
    }
}

/// Normalized `G x G` occupancy grid, row-major with latitude along rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub size: usize,
    pub bbox: BBox,
    pub cells: Vec<f64>,
}

impl Histogram2D {
    pub fn cell(&self, lat_bin: usize, lon_bin: usize) -> f64 {
        self.cells[lat_bin * self.size + lon_bin]
    }
}

/// Bin every path point; points outside the box land in the nearest edge cell.
pub fn heatmap(paths: &[Vec<[f64; 2]>], size: usize, bbox: BBox) -> Result<Histogram2D> {
    bbox.validate()?;
    if size < 2 {
        return Err(Error::InvalidConfig("heatmap grid must be at least 2x2".into()));
    }
    let mut cells = alloc::vec![HEATMAP_EPS; size * size];
    for p in paths.iter().flatten() {
        let r = BBox::bin(p[0], bbox.lat_min, bbox.lat_max, size);
        let c = BBox::bin(p[1], bbox.lon_min, bbox.lon_max, size);
        cells[r * size + c] += 1.0;
    }
    let total: f64 = cells.iter().sum();
    cells.iter_mut().for_each(|v| *v /= total);
    Ok(Histogram2D { size, bbox, cells })
}

fn check(p: &Histogram2D, q: &Histogram2D) -> Result<()> {
    if p.size != q.size || p.bbox != q.bbox || p.cells.len() != q.cells.len() {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

fn kl_cells(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * libm::log(a / b)).sum()
}

/// `Σ P ln(P / Q)`.
pub fn kl_div(p: &Histogram2D, q: &Histogram2D) -> Result<f64> {
    check(p, q)?;
    Ok(kl_cells(&p.cells, &q.cells))
}

/// Jensen-Shannon divergence, in `[0, ln 2]`.
pub fn jsd(p: &Histogram2D, q: &Histogram2D) -> Result<f64> {
    check(p, q)?;
    let mut s = 0.0;
    for (a, b) in p.cells.iter().zip(&q.cells) {
        let m = 0.5 * (a + b);
        let ta = if *a > 0.0 { a * libm::log(a / m) } else { 0.0 };
        let tb = if *b > 0.0 { b * libm::log(b / m) } else { 0.0 };
        s += 0.5 * (ta + tb);
    }
    Ok(s)
}
