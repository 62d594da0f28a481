//! Synthetic landing approaches for desk-scale experiments.
//!
//! Each corridor is an entry leg flown on a fixed bearing, a constant-radius
//! turn onto the final heading, and a straight final ending at the airport
//! reference point. Flights are perturbed by a smooth lateral offset that
//! vanishes at both ends of the path.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use core::f64::consts::PI;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::resample::{angle_diff, wrap_degrees};
use super::{RawTrajectory, TrackPoint};
use crate::error::{Error, Result};
use crate::kinematics::{Anchor, EARTH_RADIUS_M};
use crate::rng::{normal, seeded};

const NOISE_MODES: usize = 4;
const GLIDE_SLOPE_DEG: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    /// Runway designator used as the condition label when the airport has runway labels.
    pub runway: String,
    /// Track flown on the entry leg, degrees.
    pub entry_bearing_deg: f64,
    pub turn_radius_km: f64,
    pub final_heading_deg: f64,
    #[serde(default = "one")]
    pub weight: f64,
    /// Standard deviation of the lateral offset, meters.
    #[serde(default)]
    pub noise_m: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyAirportSpec {
    pub airport: String,
    pub reference: Anchor,
    /// When false every flight carries the bare airport token.
    #[serde(default)]
    pub runway_labels: bool,
    pub corridors: Vec<Corridor>,
    #[serde(default = "ToyAirportSpec::default_entry_km")]
    pub entry_km: f64,
    #[serde(default = "ToyAirportSpec::default_final_km")]
    pub final_km: f64,
    #[serde(default = "ToyAirportSpec::default_interval")]
    pub sample_interval_s: f64,
    #[serde(default = "ToyAirportSpec::default_entry_speed")]
    pub entry_speed_ms: f64,
    #[serde(default = "ToyAirportSpec::default_final_speed")]
    pub final_speed_ms: f64,
    #[serde(default = "ToyAirportSpec::default_start_time")]
    pub start_time: f64,
}

impl ToyAirportSpec {
    fn default_entry_km() -> f64 {
        20.0
    }
    fn default_final_km() -> f64 {
        12.0
    }
    fn default_interval() -> f64 {
        4.0
    }
    fn default_entry_speed() -> f64 {
        120.0
    }
    fn default_final_speed() -> f64 {
        70.0
    }
    fn default_start_time() -> f64 {
        1_570_000_000.0
    }

    /// Spec with default geometry parameters.
    pub fn new(airport: &str, reference: Anchor, runway_labels: bool, corridors: Vec<Corridor>) -> Self {
        Self {
            airport: airport.into(),
            reference,
            runway_labels,
            corridors,
            entry_km: Self::default_entry_km(),
            final_km: Self::default_final_km(),
            sample_interval_s: Self::default_interval(),
            entry_speed_ms: Self::default_entry_speed(),
            final_speed_ms: Self::default_final_speed(),
            start_time: Self::default_start_time(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        if self.corridors.is_empty() {
            return bad("at least one corridor is required");
        }
        if self.airport.trim().is_empty() {
            return bad("airport code is empty");
        }
        for c in &self.corridors {
            if !(c.turn_radius_km > 0.0) || !(c.weight >= 0.0) || !(c.noise_m >= 0.0) {
                return bad("corridor radius must be positive, weight and noise non-negative");
            }
        }
        if !(self.corridors.iter().map(|c| c.weight).sum::<f64>() > 0.0) {
            return bad("corridor weights sum to zero");
        }
        if !(self.entry_km >= 0.0 && self.final_km > 0.0 && self.sample_interval_s > 0.0) {
            return bad("leg lengths and sample interval must be positive");
        }
        if !(self.entry_speed_ms > 0.0 && self.final_speed_ms > 0.0) {
            return bad("speeds must be positive");
        }
        Ok(())
    }
}

fn unit(heading_deg: f64) -> [f64; 2] {
    let h = heading_deg.to_radians();
    [libm::sin(h), libm::cos(h)]
}

/// Nominal corridor path in local east/north meters, ending at the origin.
struct Nominal {
    start: [f64; 2],
    entry: f64,
    center: [f64; 2],
    radius: f64,
    sign: f64,
    entry_heading: f64,
    arc: f64,
    final_heading: f64,
    final_len: f64,
}

impl Nominal {
    fn new(spec: &ToyAirportSpec, c: &Corridor) -> Self {
        let final_len = spec.final_km * 1000.0;
        let radius = c.turn_radius_km * 1000.0;
        let uf = unit(c.final_heading_deg);
        let final_start = [-final_len * uf[0], -final_len * uf[1]];
        let delta = angle_diff(c.entry_bearing_deg, c.final_heading_deg);
        let sign = if delta >= 0.0 { 1.0 } else { -1.0 };
        let nf = unit(c.final_heading_deg + 90.0 * sign);
        let center = [final_start[0] + radius * nf[0], final_start[1] + radius * nf[1]];
        let ne = unit(c.entry_bearing_deg + 90.0 * sign);
        let turn_start = [center[0] - radius * ne[0], center[1] - radius * ne[1]];
        let entry = spec.entry_km * 1000.0;
        let ue = unit(c.entry_bearing_deg);
        let start = [turn_start[0] - entry * ue[0], turn_start[1] - entry * ue[1]];
        Self {
            start,
            entry,
            center,
            radius,
            sign,
            entry_heading: c.entry_bearing_deg,
            arc: radius * delta.abs().to_radians(),
            final_heading: c.final_heading_deg,
            final_len,
        }
    }

    fn length(&self) -> f64 {
        self.entry + self.arc + self.final_len
    }

    /// Position and heading at arc length `s` from the start.
    fn at(&self, s: f64) -> ([f64; 2], f64) {
        if s <= self.entry {
            let u = unit(self.entry_heading);
            return ([self.start[0] + s * u[0], self.start[1] + s * u[1]], self.entry_heading);
        }
        let s = s - self.entry;
        if s <= self.arc {
            let heading = self.entry_heading + self.sign * (s / self.radius).to_degrees();
            let n = unit(heading + 90.0 * self.sign);
            let p = [self.center[0] - self.radius * n[0], self.center[1] - self.radius * n[1]];
            return (p, heading);
        }
        let s = s - self.arc;
        let u = unit(self.final_heading);
        let rem = self.final_len - s;
        ([-rem * u[0], -rem * u[1]], self.final_heading)
    }
}

/// Generate `n` flights; the corridor of each flight is drawn by mixture weight.
pub fn synth_toy_dataset(spec: &ToyAirportSpec, n: usize, seed: u64) -> Result<Vec<RawTrajectory>> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let weights = WeightedIndex::new(spec.corridors.iter().map(|c| c.weight))
        .map_err(|e| Error::InvalidSpec(format!("corridor weights: {e}")))?;
    let nominals: Vec<Nominal> = spec.corridors.iter().map(|c| Nominal::new(spec, c)).collect();
    let norm: f64 = (1..=NOISE_MODES).map(|k| 1.0 / (k * k) as f64).sum();
    let mut flights = Vec::with_capacity(n);
    for f in 0..n {
        let ci = weights.sample(&mut rng);
        let corridor = &spec.corridors[ci];
        let nominal = &nominals[ci];
        let amps: Vec<f64> = (1..=NOISE_MODES)
            .map(|k| normal(&mut rng) * corridor.noise_m / (k as f64 * libm::sqrt(norm)))
            .collect();
        let total = nominal.length();

        // arc-length samples at the fixed interval under a linear speed schedule
        let dt = spec.sample_interval_s;
        let speed = |s: f64| spec.entry_speed_ms + (spec.final_speed_ms - spec.entry_speed_ms) * s / total;
        let mut times = Vec::new();
        let mut arcs = Vec::new();
        let (mut s, mut t) = (0.0, 0.0);
        while s < total {
            times.push(t);
            arcs.push(s);
            let v = speed(s);
            if s + v * dt >= total {
                t += (total - s) / v;
                s = total;
            } else {
                s += v * dt;
                t += dt;
            }
        }
        times.push(t);
        arcs.push(total);

        let enu: Vec<[f64; 2]> = arcs
            .iter()
            .map(|&s| {
                let (p, heading) = nominal.at(s);
                let frac = s / total;
                let offset: f64 = amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * libm::sin((k + 1) as f64 * PI * frac))
                    .sum();
                let right = unit(heading + 90.0);
                [p[0] + offset * right[0], p[1] + offset * right[1]]
            })
            .collect();

        // east/north to lat/lon by stepping back from the reference point
        let m = enu.len();
        let mut lat = alloc::vec![0.0; m];
        let mut lon = alloc::vec![0.0; m];
        lat[m - 1] = spec.reference.latitude;
        lon[m - 1] = spec.reference.longitude;
        for i in (1..m).rev() {
            let de = enu[i][0] - enu[i - 1][0];
            let dn = enu[i][1] - enu[i - 1][1];
            lat[i - 1] = lat[i] - (dn / EARTH_RADIUS_M).to_degrees();
            lon[i - 1] = lon[i] - (de / (EARTH_RADIUS_M * libm::cos(lat[i].to_radians()))).to_degrees();
        }

        let points = (0..m)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(m - 1));
                let span = times[b] - times[a];
                let ve = (enu[b][0] - enu[a][0]) / span;
                let vn = (enu[b][1] - enu[a][1]) / span;
                let remaining = total - arcs[i];
                TrackPoint {
                    timestamp: spec.start_time + 600.0 * f as f64 + times[i],
                    latitude: lat[i],
                    longitude: lon[i],
                    altitude: (remaining * libm::tan(GLIDE_SLOPE_DEG.to_radians())).min(3000.0),
                    groundspeed: libm::hypot(ve, vn),
                    track: wrap_degrees(libm::atan2(ve, vn).to_degrees()),
                }
            })
            .collect();
        flights.push(RawTrajectory {
            flight_id: format!("{}{f:05}", spec.airport),
            points,
            airport: spec.airport.clone(),
            runway: spec.runway_labels.then(|| corridor.runway.clone()),
        });
    }
    Ok(flights)
}
