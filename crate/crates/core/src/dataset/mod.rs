//! Trajectory records, resampling, standardization, splits, condition
//! vocabularies and the synthetic toy airports.

mod condition;
mod resample;
mod scaler;
mod split;
mod toy;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use condition::{condition_label, ConditionToken, Vocabulary, NULL_LABEL};
pub use resample::{resample, resample_speed_track};
pub use scaler::Scaler;
pub use split::{make_splits, SplitIndex, SplitRatios};
pub use toy::{synth_toy_dataset, Corridor, ToyAirportSpec};

use crate::error::{Error, Result};
use crate::kinematics::Anchor;
use crate::net::Tensor;

/// One ADS-B style sample. Angles in degrees, altitude in meters, speed in m/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub timestamp: f64,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
    pub groundspeed: f64,
    /// Degrees clockwise from true north, in `[0, 360)`.
    pub track: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectory {
    pub flight_id: String,
    pub points: Vec<TrackPoint>,
    pub airport: String,
    pub runway: Option<String>,
}

impl RawTrajectory {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidTrajectory {
            flight: self.flight_id.clone(),
            reason: reason.into(),
        };
        if self.points.len() < 2 {
            return Err(invalid("fewer than two points"));
        }
        if self.points.windows(2).any(|w| !(w[1].timestamp > w[0].timestamp)) {
            return Err(Error::NonMonotonicTimestamps(self.flight_id.clone()));
        }
        for p in &self.points {
            if !(-90.0..=90.0).contains(&p.latitude) {
                return Err(invalid("latitude out of range"));
            }
            if !(-180.0..=180.0).contains(&p.longitude) {
                return Err(invalid("longitude out of range"));
            }
            if !(p.groundspeed >= 0.0) {
                return Err(invalid("negative groundspeed"));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }
}

/// Channel layout of a fixed-length trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// `[lat, lon, alt]`
    Geographic,
    /// `[track_sin, track_cos, groundspeed, alt, dt]`
    Kinematic,
}

impl Layout {
    pub fn channel_names(self) -> &'static [&'static str] {
        match self {
            Layout::Geographic => &["latitude", "longitude", "altitude"],
            Layout::Kinematic => &["track_sin", "track_cos", "groundspeed", "altitude", "dt"],
        }
    }

    pub fn channels(self) -> usize {
        self.channel_names().len()
    }
}

/// Fixed-length multichannel series stored step-major (`steps x channels`).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub steps: usize,
    pub layout: Layout,
    pub condition: ConditionToken,
    pub anchor: Option<Anchor>,
    /// Sampling interval in seconds.
    pub dt: f64,
}

impl Trajectory {
    pub fn channels(&self) -> usize {
        self.layout.channels()
    }

    pub fn row(&self, step: usize) -> &[f64] {
        let c = self.channels();
        &self.values[step * c..(step + 1) * c]
    }

    pub fn get(&self, step: usize, channel: usize) -> f64 {
        self.values[step * self.channels() + channel]
    }

    pub fn column(&self, channel: usize) -> Vec<f64> {
        (0..self.steps).map(|i| self.get(i, channel)).collect()
    }

    pub fn with_condition(mut self, condition: ConditionToken) -> Self {
        self.condition = condition;
        self
    }

    /// Channels-first tensor `[C, T]` for the networks.
    pub fn to_tensor(&self) -> Tensor {
        let (c, t) = (self.channels(), self.steps);
        let mut data = Vec::with_capacity(c * t);
        for ch in 0..c {
            data.extend((0..t).map(|i| self.get(i, ch)));
        }
        Tensor::new(alloc::vec![c, t], data).expect("consistent trajectory shape")
    }

    /// Inverse of [`Trajectory::to_tensor`].
    pub fn from_tensor(
        tensor: &Tensor,
        layout: Layout,
        condition: ConditionToken,
        anchor: Option<Anchor>,
    ) -> Result<Self> {
        let shape = tensor.shape();
        if shape.len() != 2 || shape[0] != layout.channels() {
            return Err(Error::ChannelMismatch {
                expected: layout.channels(),
                found: shape.first().copied().unwrap_or(0),
            });
        }
        let (c, t) = (shape[0], shape[1]);
        let d = tensor.data();
        let mut values = Vec::with_capacity(c * t);
        for i in 0..t {
            values.extend((0..c).map(|ch| d[ch * t + i]));
        }
        let dt = match layout {
            Layout::Kinematic => values.get(4).copied().unwrap_or(0.0),
            Layout::Geographic => 0.0,
        };
        Ok(Self { values, steps: t, layout, condition, anchor, dt })
    }
}
