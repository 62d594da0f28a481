//! Short training runs on a 2-D isotropic Gaussian, standardized as the
//! pipeline does before training.

use std::time::Instant;

use trajlab_core::model::{Family, Generator, GeneratorConfig};
use trajlab_core::net::{AdamState, NetworkConfig, Tensor};
use trajlab_core::rng::{normal, seeded};
use trajlab_core::train::{train, TrainConfig};

const MEAN: [f64; 2] = [1.5, -0.5];
const SIGMA: f64 = 0.8;

fn gaussian_moments(family: Family) -> ([f64; 2], [f64; 2], Vec<f64>) {
    let mut rng = seeded(42);
    let n = 2048;
    let raw: Vec<[f64; 2]> = (0..n).map(|_| [MEAN[0] + SIGMA * normal(&mut rng), MEAN[1] + SIGMA * normal(&mut rng)]).collect();
    let mut loc = [0.0; 2];
    let mut scale = [0.0; 2];
    for d in 0..2 {
        loc[d] = raw.iter().map(|r| r[d]).sum::<f64>() / n as f64;
        scale[d] = (raw.iter().map(|r| (r[d] - loc[d]).powi(2)).sum::<f64>() / n as f64).sqrt();
    }
    let data: Vec<Tensor> = raw
        .iter()
        .map(|r| Tensor::new(vec![2, 1], vec![(r[0] - loc[0]) / scale[0], (r[1] - loc[1]) / scale[1]]).unwrap())
        .collect();
    let tokens = vec![1; data.len()];
    let mut net = NetworkConfig::new(2, 1, 2);
    net.levels = 1;
    net.res_blocks = 1;
    net.base_channels = 32;
    let gen = Generator::new(family, GeneratorConfig::new(net)).unwrap();
    let mut params = gen.init(&mut seeded(1)).unwrap();
    let mut state = AdamState::new(&params);
    let cfg = TrainConfig { epochs: 20, batch_size: 32, ..TrainConfig::default() };
    let start = Instant::now();
    let history = train(&mut params, &mut state, &data, &tokens, &cfg, &mut seeded(2), |p, b, rng| gen.loss(p, b.x, b.cond, rng)).unwrap();
    let samples = gen.sample(&params, &vec![1; 512], &mut seeded(3)).unwrap();
    eprintln!("{family}: trained and sampled in {:?}, losses {history:?}", start.elapsed());
    assert!(start.elapsed().as_secs() < 300);
    let mut mean = [0.0; 2];
    let mut var = [0.0; 2];
    let samples: Vec<[f64; 2]> = samples.data().chunks(2).map(|r| [r[0] * scale[0] + loc[0], r[1] * scale[1] + loc[1]]).collect();
    for r in &samples {
        mean[0] += r[0] / 512.0;
        mean[1] += r[1] / 512.0;
    }
    for r in &samples {
        var[0] += (r[0] - mean[0]).powi(2) / 511.0;
        var[1] += (r[1] - mean[1]).powi(2) / 511.0;
    }
    (mean, var, history)
}

fn check(family: Family) {
    let (mean, var, history) = gaussian_moments(family);
    let tol = 3.0 * SIGMA / (512.0f64 * 2.0).sqrt();
    eprintln!("{family}: mean {mean:?} var {var:?} tol {tol}");
    assert!(history.last().unwrap() < &history[0]);
    for d in 0..2 {
        assert!((mean[d] - MEAN[d]).abs() < tol, "{family} mean[{d}] = {}", mean[d]);
        assert!((var[d] / (SIGMA * SIGMA) - 1.0).abs() < 0.2, "{family} var[{d}] = {}", var[d]);
    }
}

#[test]
fn diffusion_learns_a_gaussian() {
    check(Family::Dm);
}

#[test]
fn flow_matching_learns_a_gaussian() {
    check(Family::Fm);
}
