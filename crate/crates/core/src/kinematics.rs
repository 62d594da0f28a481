//! Geographic/kinematic conversion, dead-reckoning reconstruction and
//! display smoothing.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Layout, Trajectory};
use crate::error::{Error, Result};

/// Spherical earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Latitude beyond which the flat-earth longitude step is refused.
const POLE_LIMIT_DEG: f64 = 89.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub latitude: f64,
    pub longitude: f64,
}

impl Anchor {
    pub fn new(latitude: f64, longitude: f64) -> Self {
        Self { latitude, longitude }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.latitude) && (-180.0..=180.0).contains(&self.longitude)
    }
}

/// Per-step groundspeed (m/s) and track (degrees).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedTrack {
    pub groundspeed: f64,
    pub track: f64,
}

/// Lateral path as `(latitude, longitude)` pairs in degrees.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeoPath {
    pub points: Vec<[f64; 2]>,
}

impl GeoPath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Row-major `len x 2` values.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.iter().copied()).collect()
    }

    /// Sum of flat-earth segment lengths in meters.
    pub fn length_m(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let dn = (w[1][0] - w[0][0]).to_radians() * EARTH_RADIUS_M;
                let mid = 0.5 * (w[1][0] + w[0][0]);
                let de = (w[1][1] - w[0][1]).to_radians() * EARTH_RADIUS_M * libm::cos(mid.to_radians());
                libm::hypot(dn, de)
            })
            .sum()
    }
}

/// Build the kinematic layout `[sin track, cos track, groundspeed, altitude, dt]`.
pub fn to_kinematic(geo: &Trajectory, speed_track: &[SpeedTrack]) -> Result<Trajectory> {
    if geo.layout != Layout::Geographic {
        return Err(Error::ChannelMismatch { expected: Layout::Geographic.channels(), found: geo.channels() });
    }
    if speed_track.len() != geo.steps {
        return Err(Error::ChannelMismatch { expected: geo.steps, found: speed_track.len() });
    }
    let mut values = Vec::with_capacity(geo.steps * 5);
    for (i, st) in speed_track.iter().enumerate() {
        let h = st.track.to_radians();
        values.extend_from_slice(&[libm::sin(h), libm::cos(h), st.groundspeed, geo.get(i, 2), geo.dt]);
    }
    let last = geo.steps - 1;
    Ok(Trajectory {
        values,
        steps: geo.steps,
        layout: Layout::Kinematic,
        condition: geo.condition,
        anchor: Some(Anchor::new(geo.get(last, 0), geo.get(last, 1))),
        dt: geo.dt,
    })
}

/// Dead-reckon backward from `anchor`, the position of the final step.
///
/// The displacement between steps `i-1` and `i` uses the mean of the two
/// velocity vectors over `dt_i`; with constant velocity this is exactly
/// `groundspeed * dt` along `track`.
pub fn reconstruct_latlon(kin: &Trajectory, anchor: Anchor) -> Result<GeoPath> {
    if kin.layout != Layout::Kinematic {
        return Err(Error::ChannelMismatch { expected: Layout::Kinematic.channels(), found: kin.channels() });
    }
    let n = kin.steps;
    if n == 0 {
        return Err(Error::EmptyPath);
    }
    let velocity = |i: usize| {
        let heading = libm::atan2(kin.get(i, 0), kin.get(i, 1));
        let gs = kin.get(i, 2);
        [gs * libm::cos(heading), gs * libm::sin(heading)]
    };
    let mut points = alloc::vec![[0.0; 2]; n];
    points[n - 1] = [anchor.latitude, anchor.longitude];
    let mut next = velocity(n - 1);
    for i in (1..n).rev() {
        let [lat, lon] = points[i];
        if lat.abs() > POLE_LIMIT_DEG {
            return Err(Error::PoleProximity(i));
        }
        let prev = velocity(i - 1);
        let dt = kin.get(i, 4);
        let north = 0.5 * (prev[0] + next[0]) * dt;
        let east = 0.5 * (prev[1] + next[1]) * dt;
        let dlat = (north / EARTH_RADIUS_M).to_degrees();
        let dlon = (east / (EARTH_RADIUS_M * libm::cos(lat.to_radians()))).to_degrees();
        points[i - 1] = [lat - dlat, lon - dlon];
        next = prev;
    }
    if points[0][0].abs() > POLE_LIMIT_DEG {
        return Err(Error::PoleProximity(0));
    }
    Ok(GeoPath { points })
}

/// Exponentially weighted moving average per coordinate, for display only.
pub fn ewma_smooth(path: &GeoPath, alpha: f64) -> Result<GeoPath> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let mut out = Vec::with_capacity(path.len());
    let mut state: Option<[f64; 2]> = None;
    for p in &path.points {
        let y = match state {
            None => *p,
            Some(prev) => [alpha * p[0] + (1.0 - alpha) * prev[0], alpha * p[1] + (1.0 - alpha) * prev[1]],
        };
        out.push(y);
        state = Some(y);
    }
    Ok(GeoPath { points: out })
}

/// Lateral `(lat, lon)` path; kinematic inputs are reconstructed from their anchor.
pub fn lateral(traj: &Trajectory) -> Result<GeoPath> {
    match traj.layout {
        Layout::Geographic => Ok(GeoPath { points: (0..traj.steps).map(|i| [traj.get(i, 0), traj.get(i, 1)]).collect() }),
        Layout::Kinematic => reconstruct_latlon(traj, traj.anchor.ok_or(Error::MissingAnchor)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ConditionToken;
    use alloc::vec;

    fn kinematic(rows: &[[f64; 5]]) -> Trajectory {
        Trajectory {
            values: rows.iter().flatten().copied().collect(),
            steps: rows.len(),
            layout: Layout::Kinematic,
            condition: ConditionToken::NULL,
            anchor: Some(Anchor::new(0.0, 0.0)),
            dt: 10.0,
        }
    }

    #[test]
    fn one_step_east_and_north() {
        let east = kinematic(&[[1.0, 0.0, 100.0, 0.0, 10.0], [1.0, 0.0, 100.0, 0.0, 10.0]]);
        let p = reconstruct_latlon(&east, Anchor::new(0.0, 0.0)).unwrap();
        assert!(p.points[0][0].abs() < 1e-12);
        assert!((p.points[0][1] + 0.0089932).abs() < 1e-7);

        let north = kinematic(&[[0.0, 1.0, 100.0, 0.0, 10.0], [0.0, 1.0, 100.0, 0.0, 10.0]]);
        let p = reconstruct_latlon(&north, Anchor::new(0.0, 0.0)).unwrap();
        assert!((p.points[0][0] + 0.0089932).abs() < 1e-7);
        assert!(p.points[0][1].abs() < 1e-12);
    }

    #[test]
    fn zero_speed_stays_at_anchor() {
        let k = kinematic(&[[0.6, 0.8, 0.0, 0.0, 5.0]; 4]);
        let p = reconstruct_latlon(&k, Anchor::new(47.0, 8.5)).unwrap();
        assert!(p.points.iter().all(|q| *q == [47.0, 8.5]));
    }

    #[test]
    fn pole_is_refused() {
        let k = kinematic(&[[0.0, 1.0, 100.0, 0.0, 10.0]; 3]);
        assert!(matches!(reconstruct_latlon(&k, Anchor::new(89.5, 0.0)), Err(Error::PoleProximity(_))));
    }

    #[test]
    fn ewma_edges() {
        let path = GeoPath { points: vec![[0.0, 0.0], [1.0, 2.0], [0.0, 4.0]] };
        assert_eq!(ewma_smooth(&path, 1.0).unwrap(), path);
        let s = ewma_smooth(&path, 0.5).unwrap();
        assert_eq!(s.points[1], [0.5, 1.0]);
        assert_eq!(s.points[2], [0.25, 2.5]);
        assert!(matches!(ewma_smooth(&path, 0.0), Err(Error::AlphaOutOfRange(_))));
        assert!(ewma_smooth(&path, 1.5).is_err());
    }

    #[test]
    fn kinematic_lateral_needs_anchor() {
        let mut k = kinematic(&[[0.0, 1.0, 1.0, 0.0, 1.0]; 2]);
        k.anchor = None;
        assert!(matches!(lateral(&k), Err(Error::MissingAnchor)));
    }
}
