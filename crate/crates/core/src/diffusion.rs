//! Denoising diffusion: linear noise schedule, ε-prediction loss, ancestral
//! (DDPM) and deterministic (DDIM, η = 0) samplers.
//!
//! Steps are numbered `1..=T_d`; the network sees the step as `t / T_d`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{regression_loss, Field, LossOutput, Tensor};
use crate::rng::{normal, SeededRng};
use rand::Rng;

/// Number of trajectories pushed through the network at once while sampling.
pub const SAMPLE_CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PosteriorVariance {
    /// `σ_t² = β_t`
    #[default]
    Beta,
    /// `σ_t² = β_t (1 − ᾱ_{t−1}) / (1 − ᾱ_t)`
    BetaTilde,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub variance: PosteriorVariance,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 300, beta_start: 1e-4, beta_end: 0.02, variance: PosteriorVariance::Beta }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        let mut s = make_schedule(self.steps, self.beta_start, self.beta_end)?;
        s.variance = self.variance;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub variance: PosteriorVariance,
}

/// Linearly spaced β (inclusive) with running-product ᾱ.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 || !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidRange);
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(beta)
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::InvalidRange);
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self { beta, alpha, alpha_bar, variance: PosteriorVariance::Beta })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            Err(Error::StepOutOfRange(t))
        } else {
            Ok(t - 1)
        }
    }

    /// ᾱ_t for `t` in `1..=T_d`.
    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar[self.check(t)?])
    }

    /// ᾱ_{t−1}, with ᾱ_0 = 1.
    fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t <= 1 {
            1.0
        } else {
            self.alpha_bar[t - 2]
        }
    }

    /// Reverse-step noise standard deviation at step `t`.
    pub fn sigma(&self, t: usize) -> Result<f64> {
        let i = self.check(t)?;
        let var = match self.variance {
            PosteriorVariance::Beta => self.beta[i],
            PosteriorVariance::BetaTilde => self.beta[i] * (1.0 - self.alpha_bar_prev(t)) / (1.0 - self.alpha_bar[i]),
        };
        Ok(libm::sqrt(var))
    }

    /// Network time input for step `t`.
    pub fn time_input(&self, t: usize) -> f64 {
        t as f64 / self.steps() as f64
    }
}

/// `√ᾱ·x0 + √(1−ᾱ)·ε` for an explicit ᾱ.
pub fn q_sample_with(x0: &Tensor, alpha_bar: f64, eps: &Tensor) -> Result<Tensor> {
    let (a, b) = (libm::sqrt(alpha_bar), libm::sqrt(1.0 - alpha_bar));
    x0.zip_map(eps, |x, e| a * x + b * e)
}

/// Closed-form forward corruption to step `t`.
pub fn q_sample(x0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    q_sample_with(x0, sched.alpha_bar_at(t)?, eps)
}

/// Corrupt every row of `batch: [B, ...]` to its own step.
fn corrupt_batch(batch: &Tensor, steps: &[usize], eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    batch.same_shape(eps)?;
    let b = batch.dim(0);
    if steps.len() != b {
        return Err(Error::ShapeMismatch("one diffusion step per batch row".into()));
    }
    let row = batch.numel() / b.max(1);
    let mut out = Vec::with_capacity(batch.numel());
    for (i, &t) in steps.iter().enumerate() {
        let ab = sched.alpha_bar_at(t)?;
        let (a, s) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
        let xs = &batch.data()[i * row..(i + 1) * row];
        let es = &eps.data()[i * row..(i + 1) * row];
        out.extend(xs.iter().zip(es).map(|(x, e)| a * x + s * e));
    }
    Tensor::new(batch.shape().to_vec(), out)
}

/// ε-prediction loss for given steps and noise.
pub fn dm_loss_with(
    field: &dyn Field,
    batch: &Tensor,
    cond: &[usize],
    steps: &[usize],
    eps: &Tensor,
    sched: &NoiseSchedule,
) -> Result<LossOutput> {
    let xt = corrupt_batch(batch, steps, eps, sched)?;
    let time: Vec<f64> = steps.iter().map(|&t| sched.time_input(t)).collect();
    regression_loss(field, xt, &time, cond, eps)
}

/// ε-prediction loss with steps uniform on `1..=T_d` and standard normal noise.
pub fn dm_loss(
    field: &dyn Field,
    batch: &Tensor,
    cond: &[usize],
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<LossOutput> {
    let steps: Vec<usize> = (0..batch.dim(0)).map(|_| rng.random_range(1..=sched.steps())).collect();
    let eps = Tensor::randn(batch.shape(), rng);
    dm_loss_with(field, batch, cond, &steps, &eps, sched)
}

fn chunk_shape(n: usize, sample_shape: &[usize]) -> Vec<usize> {
    let mut shape = Vec::with_capacity(sample_shape.len() + 1);
    shape.push(n);
    shape.extend_from_slice(sample_shape);
    shape
}

pub(crate) fn run_chunks(
    cond: &[usize],
    sample_shape: &[usize],
    rng: &mut SeededRng,
    mut chain: impl FnMut(Tensor, &[usize], &mut SeededRng) -> Result<Tensor>,
) -> Result<Tensor> {
    let mut parts = Vec::new();
    for c in cond.chunks(SAMPLE_CHUNK) {
        let x = Tensor::randn(&chunk_shape(c.len(), sample_shape), rng);
        parts.push(chain(x, c, rng)?);
    }
    let mut data = Vec::new();
    for p in parts {
        data.extend(p.into_data());
    }
    Tensor::new(chunk_shape(cond.len(), sample_shape), data)
}

/// Ancestral sampling; one sample per entry of `cond`, returned as `[n, ...sample_shape]`.
pub fn ddpm_sample(
    field: &dyn Field,
    sched: &NoiseSchedule,
    cond: &[usize],
    sample_shape: &[usize],
    rng: &mut SeededRng,
) -> Result<Tensor> {
    run_chunks(cond, sample_shape, rng, |mut x, c, rng| {
        for t in (1..=sched.steps()).rev() {
            let time = alloc::vec![sched.time_input(t); c.len()];
            let eps = field.predict(&x, &time, c)?;
            let i = t - 1;
            let scale = 1.0 / libm::sqrt(sched.alpha[i]);
            let coef = sched.beta[i] / libm::sqrt(1.0 - sched.alpha_bar[i]);
            x = x.zip_map(&eps, |xv, ev| scale * (xv - coef * ev))?;
            if t > 1 {
                let sigma = sched.sigma(t)?;
                for v in x.data_mut() {
                    *v += sigma * normal(rng);
                }
            }
        }
        Ok(x)
    })
}

/// Evenly spaced step subset `⌈k·T_d/S⌉, k = 1..=S`, ending at `T_d`.
pub fn ddim_steps(total: usize, substeps: usize) -> Result<Vec<usize>> {
    if substeps == 0 || substeps > total {
        return Err(Error::SubstepRange(substeps));
    }
    Ok((1..=substeps).map(|k| (k * total).div_ceil(substeps)).collect())
}

/// Deterministic (η = 0) sampling over `substeps` evenly spaced steps.
pub fn ddim_sample(
    field: &dyn Field,
    sched: &NoiseSchedule,
    cond: &[usize],
    sample_shape: &[usize],
    substeps: usize,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    let steps = ddim_steps(sched.steps(), substeps)?;
    run_chunks(cond, sample_shape, rng, |mut x, c, _| {
        for k in (0..steps.len()).rev() {
            let t = steps[k];
            let ab = sched.alpha_bar[t - 1];
            let ab_prev = if k == 0 { 1.0 } else { sched.alpha_bar[steps[k - 1] - 1] };
            let time = alloc::vec![sched.time_input(t); c.len()];
            let eps = field.predict(&x, &time, c)?;
            let (sa, sb) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
            let (pa, pb) = (libm::sqrt(ab_prev), libm::sqrt(1.0 - ab_prev));
            x = x.zip_map(&eps, |xv, ev| pa * (xv - sb * ev) / sa + pb * ev)?;
        }
        Ok(x)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hand_products() {
        let s = NoiseSchedule::from_betas(vec![0.1, 0.2, 0.3]).unwrap();
        for (a, b) in s.alpha_bar.iter().zip([0.9, 0.72, 0.504]) {
            assert!((a - b).abs() < 1e-12);
        }
        let one = make_schedule(1, 0.01, 0.02).unwrap();
        assert_eq!(one.alpha_bar, vec![0.99]);
        let d = ScheduleConfig::default().build().unwrap();
        assert!(d.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        let last = *d.alpha_bar.last().unwrap();
        assert!(last > 0.0 && last < 0.05);
    }

    #[test]
    fn invalid_ranges() {
        assert!(make_schedule(0, 0.1, 0.2).is_err());
        assert!(make_schedule(10, 0.3, 0.2).is_err());
        assert!(make_schedule(10, 0.0, 0.2).is_err());
        assert!(make_schedule(10, 0.1, 1.0).is_err());
        let s = make_schedule(10, 0.1, 0.2).unwrap();
        let x = Tensor::zeros(&[2]);
        assert!(matches!(q_sample(&x, 0, &x, &s), Err(Error::StepOutOfRange(0))));
        assert!(matches!(q_sample(&x, 11, &x, &s), Err(Error::StepOutOfRange(11))));
        assert!(matches!(ddim_steps(10, 11), Err(Error::SubstepRange(11))));
        assert!(ddim_steps(10, 0).is_err());
    }

    #[test]
    fn limit_mixtures() {
        let x0 = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let eps = Tensor::new(vec![3], vec![0.3, 0.1, -0.7]).unwrap();
        assert_eq!(q_sample_with(&x0, 1.0, &eps).unwrap(), x0);
        assert_eq!(q_sample_with(&x0, 0.0, &eps).unwrap(), eps);
        let zero = Tensor::zeros(&[3]);
        let xt = q_sample_with(&zero, 0.64, &eps).unwrap();
        for (a, e) in xt.data().iter().zip(eps.data()) {
            assert!((a - 0.6 * e).abs() < 1e-15);
        }
    }

    #[test]
    fn ddim_subset_ends_at_last_step() {
        assert_eq!(ddim_steps(300, 1).unwrap(), vec![300]);
        assert_eq!(ddim_steps(10, 3).unwrap(), vec![4, 7, 10]);
        assert_eq!(ddim_steps(5, 5).unwrap(), vec![1, 2, 3, 4, 5]);
    }
}
