use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};

/// Per-channel standardization with population statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub names: Vec<String>,
}

impl Scaler {
    /// Fit over every step of every trajectory. All trajectories must share a layout.
    pub fn fit(trajectories: &[Trajectory]) -> Result<Self> {
        let first = trajectories.first().ok_or(Error::EmptySet)?;
        let layout = first.layout;
        for t in trajectories {
            if t.layout != layout {
                return Err(Error::ChannelMismatch { expected: layout.channels(), found: t.channels() });
            }
        }
        let names = layout.channel_names().iter().map(|s| s.to_string()).collect();
        Self::fit_rows(trajectories.iter().map(|t| t.values.as_slice()), layout.channels(), names)
    }

    /// Fit over row-major blocks of `channels`-wide rows.
    pub fn fit_rows<'a>(
        blocks: impl Iterator<Item = &'a [f64]> + Clone,
        channels: usize,
        names: Vec<String>,
    ) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = vec![0.0; channels];
        for block in blocks.clone() {
            if block.len() % channels != 0 {
                return Err(Error::ChannelMismatch { expected: channels, found: block.len() % channels });
            }
            for row in block.chunks(channels) {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptySet);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut ss = vec![0.0; channels];
        for block in blocks {
            for row in block.chunks(channels) {
                for ((s, v), m) in ss.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = ss
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = libm::sqrt(s / count as f64);
                // constant channels (up to rounding) standardize to zero
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std, names })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, channels: usize) -> Result<()> {
        if channels != self.channels() {
            return Err(Error::ChannelMismatch { expected: self.channels(), found: channels });
        }
        Ok(())
    }

    /// Standardize row-major values in place.
    pub fn apply_values(&self, values: &mut [f64]) {
        let c = self.channels();
        for row in values.chunks_mut(c) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }

    pub fn invert_values(&self, values: &mut [f64]) {
        let c = self.channels();
        for row in values.chunks_mut(c) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
    }

    pub fn apply(&self, traj: &Trajectory) -> Result<Trajectory> {
        self.check(traj.channels())?;
        let mut out = traj.clone();
        self.apply_values(&mut out.values);
        Ok(out)
    }

    pub fn invert(&self, traj: &Trajectory) -> Result<Trajectory> {
        self.check(traj.channels())?;
        let mut out = traj.clone();
        self.invert_values(&mut out.values);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ConditionToken, Layout};

    fn geo(values: Vec<f64>) -> Trajectory {
        let steps = values.len() / 3;
        Trajectory { values, steps, layout: Layout::Geographic, condition: ConditionToken::NULL, anchor: None, dt: 1.0 }
    }

    #[test]
    fn population_std_and_scaled_values() {
        let t = geo(vec![1.0, 5.0, 7.0, 3.0, 5.0, 7.0]);
        let s = Scaler::fit(&[t.clone()]).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0, 7.0]);
        assert_eq!(s.std, vec![1.0, 1.0, 1.0]);
        let scaled = s.apply(&t).unwrap();
        assert_eq!(scaled.column(0), vec![-1.0, 1.0]);
        assert_eq!(scaled.column(1), vec![0.0, 0.0]);
    }

    #[test]
    fn empty_and_mismatched() {
        assert_eq!(Scaler::fit(&[]), Err(Error::EmptySet));
        let s = Scaler::fit(&[geo(vec![1.0, 2.0, 3.0])]).unwrap();
        let mut k = geo(vec![0.0; 5]);
        k.layout = Layout::Kinematic;
        k.steps = 1;
        assert!(matches!(s.apply(&k), Err(Error::ChannelMismatch { .. })));
    }
}
