//! Seeded randomness. Every stochastic routine takes an explicit [`SeededRng`].

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Derive an independent stream seed from a base seed and a tag.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, folded through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(seed ^ h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn normal(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

pub fn permutation(rng: &mut SeededRng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
