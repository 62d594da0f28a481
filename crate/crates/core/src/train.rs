//! Minibatch training loop shared by the generators and the VAE.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ConditionToken;
use crate::error::{Error, Result};
use crate::net::{adam_step, AdamConfig, AdamState, LossOutput, ParameterStore, Tensor};
use crate::rng::{permutation, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Probability of replacing a condition token by the NULL token.
    pub cond_dropout: f64,
    pub adam: AdamConfig,
    /// Decay of the exponential moving average of the weights; 0 disables it.
    /// When enabled the averaged weights replace `params` once training ends.
    pub ema_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 32, cond_dropout: 0.1, adam: AdamConfig::default(), ema_decay: 0.999 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.cond_dropout) || !(self.adam.lr > 0.0) {
            return Err(Error::InvalidConfig("cond_dropout must be in [0, 1] and lr positive".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::InvalidConfig("ema_decay must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// What the loss closure sees for one minibatch.
pub struct Batch<'a> {
    pub x: &'a Tensor,
    pub cond: &'a [usize],
    pub epoch: usize,
}

/// Train `params` in place for `cfg.epochs` epochs and return the mean loss per epoch.
///
/// Each epoch visits the samples in a fresh seeded permutation. A non-finite
/// loss aborts with [`Error::NumericFailure`].
/// Adam moments in `state` always track the raw iterate, not the average.
pub fn train<F>(
    params: &mut ParameterStore,
    state: &mut AdamState,
    data: &[Tensor],
    tokens: &[usize],
    cfg: &TrainConfig,
    rng: &mut SeededRng,
    mut loss: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&ParameterStore, Batch<'_>, &mut SeededRng) -> Result<LossOutput>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptySet);
    }
    if tokens.len() != data.len() {
        return Err(Error::DimMismatch(data.len(), tokens.len()));
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut ema = (cfg.ema_decay > 0.0).then(|| params.clone());
    let mut updates = 0u64;
    for epoch in 0..cfg.epochs {
        let order = permutation(rng, data.len());
        let (mut total, mut count) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let items: Vec<Tensor> = idx.iter().map(|&i| data[i].clone()).collect();
            let x = Tensor::stack(&items)?;
            let cond: Vec<usize> = idx
                .iter()
                .map(|&i| {
                    if cfg.cond_dropout > 0.0 && rng.random::<f64>() < cfg.cond_dropout {
                        ConditionToken::NULL.code
                    } else {
                        tokens[i]
                    }
                })
                .collect();
            let out = loss(params, Batch { x: &x, cond: &cond, epoch }, rng)?;
            if !out.loss.is_finite() || out.grads.iter().any(|(_, g)| g.data().iter().any(|v| !v.is_finite())) {
                return Err(Error::NumericFailure(epoch));
            }
            adam_step(params, &out.grads, state, &cfg.adam)?;
            if let Some(avg) = ema.as_mut() {
                updates += 1;
                // short warmup so the average does not remember the initialization
                let decay = cfg.ema_decay.min((1 + updates) as f64 / (10 + updates) as f64);
                for (name, p) in params.iter() {
                    let a = avg.get_mut(name)?;
                    for (a, p) in a.data_mut().iter_mut().zip(p.data()) {
                        *a = decay * *a + (1.0 - decay) * p;
                    }
                }
            }
            total += out.loss * idx.len() as f64;
            count += idx.len();
        }
        history.push(total / count as f64);
    }
    if let Some(avg) = ema {
        *params = avg;
    }
    Ok(history)
}
