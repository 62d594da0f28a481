use alloc::vec::Vec;

use super::SampleSet;
use crate::error::{Error, Result};

const TOL: f64 = 1e-10;
const MAX_ITER: usize = 20_000;

/// Principal axes of the pooled sets and every set projected onto them.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm components, strongest first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// Per input set, one `k`-vector per row.
    pub coords: Vec<Vec<Vec<f64>>>,
    /// Fewer than `k` components carry non-zero variance.
    pub rank_deficient: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(c: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    (0..d).map(|i| dot(&c[i * d..(i + 1) * d], v)).collect()
}

/// Fit components on the centered union of `sets` by power iteration with
/// deflation, then project each set.
pub fn pca_project(sets: &[&SampleSet], k: usize) -> Result<Pca> {
    let first = sets.first().ok_or(Error::EmptySet)?;
    let d = first.dim();
    if let Some(s) = sets.iter().find(|s| s.dim() != d) {
        return Err(Error::DimMismatch(d, s.dim()));
    }
    let n: usize = sets.iter().map(|s| s.len()).sum();
    if n < k + 1 || k == 0 {
        return Err(Error::InvalidConfig("pca needs k >= 1 and more than k pooled rows".into()));
    }
    let mut mean = alloc::vec![0.0; d];
    for row in sets.iter().flat_map(|s| s.rows()) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = alloc::vec![0.0; d * d];
    let mut centered = alloc::vec![0.0; d];
    for row in sets.iter().flat_map(|s| s.rows()) {
        centered.iter_mut().zip(row).zip(&mean).for_each(|((c, v), m)| *c = v - m);
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for (dst, cj) in cov[i * d..(i + 1) * d].iter_mut().zip(&centered) {
                *dst += ci * cj;
            }
        }
    }
    cov.iter_mut().for_each(|v| *v /= (n - 1) as f64);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();

    let mut components = Vec::new();
    let mut eigenvalues = Vec::new();
    let floor = 1e-12 * trace.max(f64::MIN_POSITIVE);
    for _ in 0..k.min(d) {
        // start from the strongest column of the deflated covariance, which lies in its range
        let col = (0..d)
            .max_by(|&a, &b| {
                let na: f64 = (0..d).map(|i| cov[i * d + a] * cov[i * d + a]).sum();
                let nb: f64 = (0..d).map(|i| cov[i * d + b] * cov[i * d + b]).sum();
                na.total_cmp(&nb)
            })
            .unwrap_or(0);
        let mut v: Vec<f64> = (0..d).map(|i| cov[i * d + col]).collect();
        let norm = libm::sqrt(dot(&v, &v));
        if !(norm > floor) {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        for _ in 0..MAX_ITER {
            let mut w = matvec(&cov, d, &v);
            let nw = libm::sqrt(dot(&w, &w));
            if !(nw > 0.0) {
                break;
            }
            w.iter_mut().for_each(|x| *x /= nw);
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            v = w;
            if libm::sqrt(delta) < TOL {
                break;
            }
        }
        let lambda = dot(&v, &matvec(&cov, d, &v));
        if !(lambda > floor) {
            break;
        }
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    let explained_ratio = eigenvalues.iter().map(|l| if trace > 0.0 { l / trace } else { 0.0 }).collect();
    let coords = sets
        .iter()
        .map(|s| {
            s.rows()
                .map(|row| {
                    let c: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
                    components.iter().map(|p| dot(p, &c)).collect()
                })
                .collect()
        })
        .collect();
    Ok(Pca { mean, rank_deficient: components.len() < k, components, eigenvalues, explained_ratio, coords })
}
