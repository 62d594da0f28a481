use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use trajlab::ingest::{
    load_trajectories, parse_timestamp, read_trajectories, write_csv, AltitudeUnit, Schema, SpeedUnit, KNOTS_TO_MS,
};
use trajlab::LabError;
use trajlab_core::Error as CoreError;

const HEADER: &str = "flight_id,timestamp,latitude,longitude,altitude,groundspeed,track,airport,runway\n";

fn two_flights(rows: usize) -> String {
    let mut s = HEADER.to_string();
    for f in ["A1", "B2"] {
        for i in 0..rows {
            let t = 1_600_000_000.0 + i as f64 * 4.0;
            let lat = 47.0 + i as f64 * 1e-3;
            writeln!(s, "{f},{t},{lat},8.5,{},100,{},LSZH,14", 3000.0 - i as f64, 370.0).unwrap();
        }
    }
    s
}

fn read(text: &str, schema: &Schema) -> trajlab::Result<Vec<trajlab_core::dataset::RawTrajectory>> {
    read_trajectories(text.as_bytes(), schema, Path::new("inline.csv"))
}

#[test]
fn groups_rows_by_flight_in_file_order() {
    let flights = read(&two_flights(300), &Schema::default()).unwrap();
    assert_eq!(flights.len(), 2);
    assert_eq!(flights[0].flight_id, "A1");
    assert_eq!(flights[1].flight_id, "B2");
    for f in &flights {
        assert_eq!(f.points.len(), 300);
        assert_eq!(f.airport, "LSZH");
        assert_eq!(f.runway.as_deref(), Some("14"));
        assert!(f.points.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }
    // track is wrapped into [0, 360)
    assert!((flights[0].points[0].track - 10.0).abs() < 1e-9);
}

#[test]
fn knots_and_feet_are_converted() {
    let schema = Schema::parse("groundspeed_unit = kt\naltitude_unit = ft\n").unwrap();
    let flights = read(&two_flights(3), &schema).unwrap();
    let p = &flights[0].points[0];
    assert!((p.groundspeed - 51.4444).abs() < 1e-9);
    assert!((p.groundspeed - 100.0 * KNOTS_TO_MS).abs() < 1e-12);
    assert!((p.altitude - 3000.0 * 0.3048).abs() < 1e-9);
}

#[test]
fn out_of_order_rows_are_rejected() {
    let text = format!("{HEADER}X,10,47,8,100,80,90,LSZH,14\nX,20,47,8,100,80,90,LSZH,14\nX,15,47,8,100,80,90,LSZH,14\n");
    let err = read(&text, &Schema::default()).unwrap_err();
    assert!(matches!(err, LabError::Core(CoreError::NonMonotonicTimestamps(_))), "{err:?}");
}

#[test]
fn missing_column_is_named() {
    let text = "flight_id,timestamp,latitude,longitude,altitude,track,airport\nX,1,47,8,100,90,LSZH\n";
    match read(text, &Schema::default()) {
        Err(LabError::MissingColumn(c)) => assert_eq!(c, "groundspeed"),
        other => panic!("expected MissingColumn, got {other:?}"),
    }
}

#[test]
fn missing_airport_needs_a_default() {
    let text = "flight_id,timestamp,latitude,longitude,altitude,groundspeed,track\nX,1,47,8,100,80,90\nX,2,47,8,100,80,90\n";
    assert!(matches!(read(text, &Schema::default()), Err(LabError::MissingColumn(_))));
    let schema = Schema::parse("airport = none\ndefault_airport = EIDW\nrunway = none").unwrap();
    let flights = read(text, &schema).unwrap();
    assert_eq!(flights[0].airport, "EIDW");
    assert_eq!(flights[0].runway, None);
}

#[test]
fn header_only_file_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::File::create(&path).unwrap().write_all(HEADER.as_bytes()).unwrap();
    assert!(matches!(load_trajectories(&path, &Schema::default()), Err(LabError::EmptyFile(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_trajectories(Path::new("/nonexistent/flights.csv"), &Schema::default()).unwrap_err();
    assert!(matches!(err, LabError::Io { .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn iso_timestamps() {
    assert_eq!(parse_timestamp("1600000000"), Some(1_600_000_000.0));
    assert_eq!(parse_timestamp("2020-09-13T12:26:40Z"), Some(1_600_000_000.0));
    assert_eq!(parse_timestamp("2020-09-13T14:26:40+02:00"), Some(1_600_000_000.0));
    assert_eq!(parse_timestamp("2020-09-13 12:26:40.5"), Some(1_600_000_000.5));
    assert_eq!(parse_timestamp("yesterday"), None);
    assert_eq!(parse_timestamp("NaN"), None);

    let text = format!("{HEADER}X,2020-09-13T12:26:40Z,47,8,100,80,90,LSZH,14\nX,2020-09-13T12:26:44Z,47,8,100,80,90,LSZH,14\n");
    let f = read(&text, &Schema::default()).unwrap();
    assert_eq!(f[0].points[1].timestamp - f[0].points[0].timestamp, 4.0);
}

#[test]
fn schema_parsing() {
    let s = Schema::parse("# OpenSky export\nflight_id = callsign\ntimestamp=time # unix\nspeed_unit = knots\n").unwrap();
    assert_eq!(s.flight_id, "callsign");
    assert_eq!(s.timestamp, "time");
    assert_eq!(s.speed_unit, SpeedUnit::Knots);
    assert_eq!(s.altitude_unit, AltitudeUnit::Meters);
    assert!(matches!(Schema::parse("colour = red"), Err(LabError::Config(_))));
    assert!(matches!(Schema::parse("altitude_unit = furlongs"), Err(LabError::Config(_))));
    assert!(matches!(Schema::parse("just words"), Err(LabError::Config(_))));
}

#[test]
fn canonical_csv_round_trip() {
    let flights = read(&two_flights(5), &Schema::default()).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &flights).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(HEADER));
    assert_eq!(read(&text, &Schema::default()).unwrap(), flights);
}
