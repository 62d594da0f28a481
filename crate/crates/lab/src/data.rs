//! From a data source to resampled, split trajectories.

use sha2::{Digest, Sha256};
use trajlab_core::dataset::{
    make_splits, resample, resample_speed_track, synth_toy_dataset, ConditionToken, Layout, RawTrajectory, Scaler,
    SplitIndex, SplitRatios, Trajectory, Vocabulary,
};
use trajlab_core::kinematics::to_kinematic;
use trajlab_core::net::Tensor;

use crate::config::{load_toy_spec, DataSource, ToySource};
use crate::error::{LabError, Result};
use crate::ingest::{load_trajectories, Schema};

/// Read a CSV source or synthesize a toy source with `seed`.
pub fn load_raw(src: &DataSource, seed: u64) -> Result<Vec<RawTrajectory>> {
    match (&src.toy, &src.csv) {
        (Some(toy), None) => {
            let spec = match toy {
                ToySource::Inline(s) => s.clone(),
                ToySource::Path(p) => load_toy_spec(p)?,
            };
            Ok(synth_toy_dataset(&spec, src.flights, seed)?)
        }
        (None, Some(path)) => {
            let schema = match &src.schema {
                Some(p) => Schema::load(p)?,
                None => Schema::default(),
            };
            load_trajectories(path, &schema)
        }
        _ => Err(LabError::Config("data source needs exactly one of `toy` or `csv`".into())),
    }
}

/// One airport's trajectories in the run layout, before standardization.
#[derive(Clone, Debug)]
pub struct Domain {
    pub raw: Vec<RawTrajectory>,
    pub trajectories: Vec<Trajectory>,
    /// Resampled `(lat, lon)` of every trajectory.
    pub lateral: Vec<Vec<[f64; 2]>>,
    pub splits: SplitIndex,
}

impl Domain {
    pub fn build(raw: Vec<RawTrajectory>, layout: Layout, steps: usize, ratios: SplitRatios, seed: u64) -> Result<Self> {
        if raw.is_empty() {
            return Err(trajlab_core::Error::EmptySet.into());
        }
        let mut trajectories = Vec::with_capacity(raw.len());
        let mut lateral = Vec::with_capacity(raw.len());
        for r in &raw {
            let geo = resample(r, steps)?;
            lateral.push((0..steps).map(|i| [geo.get(i, 0), geo.get(i, 1)]).collect());
            trajectories.push(match layout {
                Layout::Geographic => geo,
                Layout::Kinematic => to_kinematic(&geo, &resample_speed_track(r, steps)?)?,
            });
        }
        let splits = make_splits(raw.len(), ratios, seed)?;
        Ok(Self { raw, trajectories, lateral, splits })
    }

    /// Label of the first flight's airport, used as the single target token.
    pub fn airport(&self) -> &str {
        &self.raw[0].airport
    }

    /// Tokens fitted into `vocab` from each flight's airport and runway.
    pub fn fit_tokens(&mut self, vocab: &mut Vocabulary) -> Result<()> {
        for (t, r) in self.trajectories.iter_mut().zip(&self.raw) {
            t.condition = vocab.fit(&r.airport, r.runway.as_deref())?;
        }
        Ok(())
    }

    /// Every flight carries the same token.
    pub fn set_token(&mut self, token: ConditionToken) {
        for t in &mut self.trajectories {
            t.condition = token;
        }
    }

    pub fn select(&self, idx: &[usize]) -> Vec<Trajectory> {
        idx.iter().map(|&i| self.trajectories[i].clone()).collect()
    }

    pub fn test_lateral(&self) -> Vec<Vec<[f64; 2]>> {
        self.splits.test.iter().map(|&i| self.lateral[i].clone()).collect()
    }

    /// Hash of the test trajectories, identifying the held-out set in reports.
    pub fn test_hash(&self) -> String {
        let mut h = Sha256::new();
        for &i in &self.splits.test {
            h.update(self.raw[i].flight_id.as_bytes());
            for v in &self.trajectories[i].values {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Standardized `[C, T]` tensors and token codes for training.
pub fn standardized(trajectories: &[Trajectory], scaler: &Scaler) -> Result<(Vec<Tensor>, Vec<usize>)> {
    let mut data = Vec::with_capacity(trajectories.len());
    let mut tokens = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        data.push(scaler.apply(t)?.to_tensor());
        tokens.push(t.condition.code);
    }
    Ok((data, tokens))
}
