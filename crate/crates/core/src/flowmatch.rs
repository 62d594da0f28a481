//! Flow matching on the linear (optimal-transport) conditional path, with
//! explicit ODE integration from `t = 0` (noise) to `t = 1` (data).

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::run_chunks;
use crate::error::{Error, Result};
use crate::net::{regression_loss, Field, LossOutput, Tensor};
use crate::rng::SeededRng;

/// Flow time in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FlowTime(f64);

impl FlowTime {
    pub fn new(t: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&t) {
            Ok(Self(t))
        } else {
            Err(Error::InvalidRange)
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    #[default]
    Euler,
    Midpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub steps: usize,
    pub integrator: Integrator,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { steps: 100, integrator: Integrator::Euler }
    }
}

/// `x_t = (1 − t)·x0 + t·x1` and the target velocity `x1 − x0`.
pub fn ot_path(x0: &Tensor, x1: &Tensor, t: FlowTime) -> Result<(Tensor, Tensor)> {
    let t = t.get();
    let xt = x0.zip_map(x1, |a, b| (1.0 - t) * a + t * b)?;
    let ut = x0.zip_map(x1, |a, b| b - a)?;
    Ok((xt, ut))
}

/// Velocity-matching loss for explicit per-row times and noise.
pub fn fm_loss_with(
    field: &dyn Field,
    batch: &Tensor,
    cond: &[usize],
    times: &[FlowTime],
    noise: &Tensor,
) -> Result<LossOutput> {
    batch.same_shape(noise)?;
    let b = batch.dim(0);
    if times.len() != b {
        return Err(Error::ShapeMismatch("one flow time per batch row".into()));
    }
    let row = batch.numel() / b.max(1);
    let mut xt = Vec::with_capacity(batch.numel());
    for (i, t) in times.iter().enumerate() {
        let t = t.get();
        let x1 = &batch.data()[i * row..(i + 1) * row];
        let x0 = &noise.data()[i * row..(i + 1) * row];
        xt.extend(x0.iter().zip(x1).map(|(a, b)| (1.0 - t) * a + t * b));
    }
    let xt = Tensor::new(batch.shape().to_vec(), xt)?;
    let target = batch.zip_map(noise, |x1, x0| x1 - x0)?;
    let time: Vec<f64> = times.iter().map(|t| t.get()).collect();
    regression_loss(field, xt, &time, cond, &target)
}

/// Velocity-matching loss with `t ~ U[0, 1]` and standard normal noise.
pub fn fm_loss(field: &dyn Field, batch: &Tensor, cond: &[usize], rng: &mut SeededRng) -> Result<LossOutput> {
    let times: Vec<FlowTime> = (0..batch.dim(0)).map(|_| FlowTime(rng.random::<f64>())).collect();
    let noise = Tensor::randn(batch.shape(), rng);
    fm_loss_with(field, batch, cond, &times, &noise)
}

/// Integrate `dx/dt = v(x, t)` from 0 to 1 in `steps` uniform steps.
pub fn integrate(field: &dyn Field, x0: Tensor, cond: &[usize], config: FlowConfig) -> Result<Tensor> {
    if config.steps == 0 {
        return Err(Error::SubstepRange(0));
    }
    let h = 1.0 / config.steps as f64;
    let n = cond.len();
    let mut x = x0;
    for k in 0..config.steps {
        let t = k as f64 * h;
        let v = field.predict(&x, &alloc::vec![t; n], cond)?;
        match config.integrator {
            Integrator::Euler => x.axpy(h, &v),
            Integrator::Midpoint => {
                let mut mid = x.clone();
                mid.axpy(0.5 * h, &v);
                let vm = field.predict(&mid, &alloc::vec![t + 0.5 * h; n], cond)?;
                x.axpy(h, &vm);
            }
        }
    }
    Ok(x)
}

/// Sample by integrating from standard normal draws; returns `[n, ...sample_shape]`.
pub fn flow_sample(
    field: &dyn Field,
    cond: &[usize],
    sample_shape: &[usize],
    config: FlowConfig,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    if config.steps == 0 {
        return Err(Error::SubstepRange(0));
    }
    run_chunks(cond, sample_shape, rng, |x, c, _| integrate(field, x, c, config))
}

/// Explicit Euler sampling with `steps` uniform steps.
pub fn euler_sample(
    field: &dyn Field,
    cond: &[usize],
    sample_shape: &[usize],
    steps: usize,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    flow_sample(field, cond, sample_shape, FlowConfig { steps, integrator: Integrator::Euler }, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn path_endpoints_and_plug_in() {
        let x0 = Tensor::new(vec![2], vec![0.3, -1.0]).unwrap();
        let x1 = Tensor::new(vec![2], vec![2.0, 5.0]).unwrap();
        assert_eq!(ot_path(&x0, &x1, FlowTime::new(0.0).unwrap()).unwrap().0, x0);
        assert_eq!(ot_path(&x0, &x1, FlowTime::new(1.0).unwrap()).unwrap().0, x1);
        let (xt, ut) = ot_path(&Tensor::zeros(&[1]), &Tensor::full(&[1], 2.0), FlowTime::new(0.25).unwrap()).unwrap();
        assert_eq!(xt.data(), &[0.5]);
        assert_eq!(ut.data(), &[2.0]);
        assert!(FlowTime::new(1.5).is_err());
        assert!(ot_path(&x0, &Tensor::zeros(&[3]), FlowTime::new(0.5).unwrap()).is_err());
    }
}
