use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{permutation, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1 }
    }
}

/// Disjoint train/validation/test partitions. `train` is kept in seeded
/// permutation order, so every fraction is a prefix of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

fn floor_count(n: usize, r: f64) -> usize {
    // absorb representation error such as 0.1 * 10 = 0.99999...
    libm::floor(n as f64 * r + 1e-9) as usize
}

pub fn make_splits(n: usize, ratios: SplitRatios, seed: u64) -> Result<SplitIndex> {
    let r = [ratios.train, ratios.val, ratios.test];
    if r.iter().any(|v| !(*v > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::RatioSumInvalid);
    }
    let perm = permutation(&mut seeded(seed), n);
    let n_val = floor_count(n, ratios.val);
    let n_test = floor_count(n, ratios.test);
    let n_train = n - n_val - n_test;
    Ok(SplitIndex {
        train: perm[..n_train].to_vec(),
        val: perm[n_train..n_train + n_val].to_vec(),
        test: perm[n_train + n_val..].to_vec(),
        seed,
    })
}

impl SplitIndex {
    /// The first `ceil(s * |train|)` training indices; `s` is clamped to `[0, 1]`.
    pub fn take_fraction(&self, s: f64) -> Vec<usize> {
        let s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
        let k = libm::ceil(s * self.train.len() as f64 - 1e-9).max(0.0) as usize;
        self.train[..k.min(self.train.len())].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let s = make_splits(10, SplitRatios::default(), 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        assert_eq!(s, make_splits(10, SplitRatios::default(), 7).unwrap());
        let big = make_splits(20000, SplitRatios::default(), 1).unwrap();
        assert_eq!(big.train.len(), 16000);
        assert_eq!(big.take_fraction(0.05).len(), 800);
        assert!(big.take_fraction(0.0).is_empty());
        assert_eq!(big.take_fraction(1.0), big.train);
    }

    #[test]
    fn remainder_goes_to_train() {
        let s = make_splits(13, SplitRatios::default(), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (11, 1, 1));
    }

    #[test]
    fn invalid_ratios() {
        let bad = SplitRatios { train: 0.8, val: 0.1, test: 0.2 };
        assert_eq!(make_splits(10, bad, 0), Err(Error::RatioSumInvalid));
        let zero = SplitRatios { train: 1.0, val: 0.0, test: 0.0 };
        assert_eq!(make_splits(10, zero, 0), Err(Error::RatioSumInvalid));
    }
}
