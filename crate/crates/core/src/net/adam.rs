use alloc::format;

use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ParameterStore,
    pub v: ParameterStore,
}

impl AdamState {
    pub fn new(params: &ParameterStore) -> Self {
        Self { step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }
}

/// One bias-corrected adaptive-moment update. Parameters without an entry in
/// `grads` are treated as having zero gradient.
pub fn adam_step(
    params: &mut ParameterStore,
    grads: &ParameterStore,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch(format!("gradient for {name}")));
        }
    }
    for (name, p) in params.iter() {
        if state.m.get(name)?.shape() != p.shape() || state.v.get(name)?.shape() != p.shape() {
            return Err(Error::ShapeMismatch(format!("optimizer state for {name}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - libm::pow(cfg.beta1, f64::from(t));
    let c2 = 1.0 - libm::pow(cfg.beta2, f64::from(t));
    let names: alloc::vec::Vec<alloc::string::String> = params.names().map(Into::into).collect();
    for name in &names {
        let g = grads.get(name).ok();
        let m = state.m.get_mut(name)?;
        match g {
            Some(g) => {
                for (mv, gv) in m.data_mut().iter_mut().zip(g.data()) {
                    *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
                }
            }
            None => m.data_mut().iter_mut().for_each(|mv| *mv *= cfg.beta1),
        }
        let v = state.v.get_mut(name)?;
        match g {
            Some(g) => {
                for (vv, gv) in v.data_mut().iter_mut().zip(g.data()) {
                    *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
                }
            }
            None => v.data_mut().iter_mut().for_each(|vv| *vv *= cfg.beta2),
        }
        let m = state.m.get(name)?.data();
        let v = state.v.get(name)?.data();
        let p = params.get_mut(name)?;
        for ((pv, mv), vv) in p.data_mut().iter_mut().zip(m).zip(v) {
            let mhat = mv / c1;
            let vhat = vv / c2;
            *pv -= cfg.lr * mhat / (libm::sqrt(vhat) + cfg.eps);
        }
    }
    Ok(())
}
