use alloc::vec::Vec;

use super::MetricSummary;
use crate::error::{Error, Result};

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    libm::sqrt(dx * dx + dy * dy)
}

/// Full cumulative dynamic-time-warping cost with Euclidean point cost and
/// the symmetric (diagonal, insertion, deletion) step pattern.
pub fn dtw(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPath);
    }
    let m = b.len();
    let mut prev = alloc::vec![f64::INFINITY; m];
    let mut cur = alloc::vec![0.0; m];
    for (i, &p) in a.iter().enumerate() {
        for j in 0..m {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j - 1].min(prev[j]).min(cur[j - 1]),
            };
            cur[j] = dist(p, b[j]) + best;
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// For each generated path, the smallest DTW cost to any reference path;
/// summarized as mean and spread over generated paths.
pub fn mean_min_dtw(generated: &[Vec<[f64; 2]>], reference: &[Vec<[f64; 2]>]) -> Result<MetricSummary> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut raw = Vec::with_capacity(generated.len());
    for g in generated {
        let mut best = f64::INFINITY;
        for r in reference {
            best = best.min(dtw(g, r)?);
        }
        raw.push(best);
    }
    MetricSummary::from_values("dtw", raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn line(xs: &[f64]) -> Vec<[f64; 2]> {
        xs.iter().map(|&x| [x, 0.0]).collect()
    }

    #[test]
    fn hand_cases() {
        assert_eq!(dtw(&line(&[1.0, 2.0, 3.0]), &line(&[1.0, 2.0, 2.0, 3.0])).unwrap(), 0.0);
        assert_eq!(dtw(&line(&[0.0]), &line(&[3.0])).unwrap(), 3.0);
        assert!(dtw(&[], &line(&[1.0])).is_err());
    }

    #[test]
    fn min_over_references() {
        let g = vec![line(&[0.0])];
        let r = vec![line(&[9.0]), line(&[4.0])];
        let s = mean_min_dtw(&g, &r).unwrap();
        assert_eq!((s.mean, s.std, s.n), (4.0, 0.0, 1));
    }
}
