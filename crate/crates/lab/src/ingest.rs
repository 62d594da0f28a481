//! CSV ingestion of ADS-B style exports and the canonical CSV writer.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use trajlab_core::dataset::{RawTrajectory, TrackPoint};
use trajlab_core::Error as CoreError;

use crate::error::{LabError, Result};

pub const KNOTS_TO_MS: f64 = 0.514444;
pub const FEET_TO_M: f64 = 0.3048;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AltitudeUnit {
    Meters,
    Feet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeedUnit {
    MetersPerSecond,
    Knots,
}

/// Column names and units of an input file.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub flight_id: String,
    pub timestamp: String,
    pub latitude: String,
    pub longitude: String,
    pub altitude: String,
    pub groundspeed: String,
    pub track: String,
    pub runway: Option<String>,
    pub airport: Option<String>,
    /// Airport code used when the file has no airport column.
    pub default_airport: Option<String>,
    pub altitude_unit: AltitudeUnit,
    pub speed_unit: SpeedUnit,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            flight_id: "flight_id".into(),
            timestamp: "timestamp".into(),
            latitude: "latitude".into(),
            longitude: "longitude".into(),
            altitude: "altitude".into(),
            groundspeed: "groundspeed".into(),
            track: "track".into(),
            runway: Some("runway".into()),
            airport: Some("airport".into()),
            default_airport: None,
            altitude_unit: AltitudeUnit::Meters,
            speed_unit: SpeedUnit::MetersPerSecond,
        }
    }
}

impl Schema {
    /// Parse `key = value` lines; `#` starts a comment. Unlisted keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Schema::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("schema line {}: expected key = value", no + 1)))?;
            let value = value.trim().to_string();
            let optional = |v: String| if v.is_empty() || v == "none" { None } else { Some(v) };
            match key.trim() {
                "flight_id" => s.flight_id = value,
                "timestamp" => s.timestamp = value,
                "latitude" => s.latitude = value,
                "longitude" => s.longitude = value,
                "altitude" => s.altitude = value,
                "groundspeed" => s.groundspeed = value,
                "track" => s.track = value,
                "runway" => s.runway = optional(value),
                "airport" => s.airport = optional(value),
                "default_airport" => s.default_airport = optional(value),
                "altitude_unit" => {
                    s.altitude_unit = match value.as_str() {
                        "m" | "meters" => AltitudeUnit::Meters,
                        "ft" | "feet" => AltitudeUnit::Feet,
                        other => return Err(LabError::Config(format!("unknown altitude unit {other:?}"))),
                    }
                }
                "groundspeed_unit" | "speed_unit" => {
                    s.speed_unit = match value.as_str() {
                        "m/s" | "mps" => SpeedUnit::MetersPerSecond,
                        "kt" | "kts" | "knots" => SpeedUnit::Knots,
                        other => return Err(LabError::Config(format!("unknown speed unit {other:?}"))),
                    }
                }
                other => return Err(LabError::Config(format!("unknown schema key {other:?}"))),
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Unix seconds (integer or float) or an ISO-8601 date-time; naive times are UTC.
pub fn parse_timestamp(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let seconds = |secs: i64, nanos: u32| secs as f64 + f64::from(nanos) * 1e-9;
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(seconds(dt.timestamp(), dt.timestamp_subsec_nanos()));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let dt = dt.and_utc();
            return Some(seconds(dt.timestamp(), dt.timestamp_subsec_nanos()));
        }
    }
    None
}

struct Columns {
    flight: usize,
    time: usize,
    lat: usize,
    lon: usize,
    alt: usize,
    gs: usize,
    track: usize,
    runway: Option<usize>,
    airport: Option<usize>,
}

fn locate(headers: &csv::StringRecord, schema: &Schema) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| find(name).ok_or_else(|| LabError::MissingColumn(name.into()));
    let airport = schema.airport.as_deref().and_then(find);
    if airport.is_none() && schema.default_airport.is_none() {
        return Err(LabError::MissingColumn(schema.airport.clone().unwrap_or_else(|| "airport".into())));
    }
    Ok(Columns {
        flight: need(&schema.flight_id)?,
        time: need(&schema.timestamp)?,
        lat: need(&schema.latitude)?,
        lon: need(&schema.longitude)?,
        alt: need(&schema.altitude)?,
        gs: need(&schema.groundspeed)?,
        track: need(&schema.track)?,
        runway: schema.runway.as_deref().and_then(find),
        airport,
    })
}

/// Read one trajectory per distinct flight id, in order of first appearance.
///
/// Rows of a flight must appear with strictly increasing timestamps.
pub fn load_trajectories(path: &Path, schema: &Schema) -> Result<Vec<RawTrajectory>> {
    let file = fs::File::open(path).map_err(|e| LabError::io(path, e))?;
    read_trajectories(file, schema, path)
}

pub fn read_trajectories(reader: impl std::io::Read, schema: &Schema, origin: &Path) -> Result<Vec<RawTrajectory>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = locate(rdr.headers()?, schema)?;
    let alt_scale = match schema.altitude_unit {
        AltitudeUnit::Meters => 1.0,
        AltitudeUnit::Feet => FEET_TO_M,
    };
    let gs_scale = match schema.speed_unit {
        SpeedUnit::MetersPerSecond => 1.0,
        SpeedUnit::Knots => KNOTS_TO_MS,
    };
    let mut flights: Vec<RawTrajectory> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let number = |i: usize, what: &str| {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| LabError::BadRecord { line, reason: format!("{what} {:?} is not a number", field(i)) })
        };
        let timestamp = parse_timestamp(field(cols.time))
            .ok_or_else(|| LabError::BadRecord { line, reason: format!("unreadable timestamp {:?}", field(cols.time)) })?;
        let point = TrackPoint {
            timestamp,
            latitude: number(cols.lat, "latitude")?,
            longitude: number(cols.lon, "longitude")?,
            altitude: number(cols.alt, "altitude")? * alt_scale,
            groundspeed: number(cols.gs, "groundspeed")? * gs_scale,
            track: number(cols.track, "track")?.rem_euclid(360.0),
        };
        let id = field(cols.flight).to_string();
        let slot = match index.get(&id) {
            Some(&i) => i,
            None => {
                let airport = match cols.airport.map(field).filter(|a| !a.is_empty()) {
                    Some(a) => a.to_string(),
                    None => schema
                        .default_airport
                        .clone()
                        .ok_or_else(|| LabError::BadRecord { line, reason: "empty airport".into() })?,
                };
                let runway = cols.runway.map(field).filter(|r| !r.is_empty()).map(String::from);
                index.insert(id.clone(), flights.len());
                flights.push(RawTrajectory { flight_id: id.clone(), points: Vec::new(), airport, runway });
                flights.len() - 1
            }
        };
        let f = &mut flights[slot];
        if f.points.last().is_some_and(|p| !(timestamp > p.timestamp)) {
            return Err(CoreError::NonMonotonicTimestamps(id).into());
        }
        f.points.push(point);
    }
    if flights.is_empty() {
        return Err(LabError::EmptyFile(origin.to_path_buf()));
    }
    Ok(flights)
}

/// Write trajectories with the default schema (meters, m/s, Unix seconds).
pub fn write_trajectories(path: &Path, flights: &[RawTrajectory]) -> Result<()> {
    let mut out = Vec::new();
    write_csv(&mut out, flights)?;
    fs::write(path, out).map_err(|e| LabError::io(path, e))
}

pub fn write_csv(out: &mut impl Write, flights: &[RawTrajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flight_id", "timestamp", "latitude", "longitude", "altitude", "groundspeed", "track", "airport", "runway"])?;
    for f in flights {
        for p in &f.points {
            w.write_record([
                f.flight_id.clone(),
                p.timestamp.to_string(),
                p.latitude.to_string(),
                p.longitude.to_string(),
                p.altitude.to_string(),
                p.groundspeed.to_string(),
                p.track.to_string(),
                f.airport.clone(),
                f.runway.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(|e| LabError::io("<csv>", e))?;
    Ok(())
}
