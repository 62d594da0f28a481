use std::collections::BTreeMap;

use trajlab::plot::{overlay_svg, pca_svg, GENERATED_COLOR, REAL_COLOR};
use trajlab::report::{significance_table, EvalReport, PcaCoords, PlotPaths, Protocol};
use trajlab::LabError;
use trajlab_core::metrics::MetricSummary;
use trajlab_core::model::Family;

fn report(run: &str, split: f64, offset: f64, spread: f64) -> EvalReport {
    let mut metrics = BTreeMap::new();
    for (i, name) in ["dtw", "e_distance", "mmd"].into_iter().enumerate() {
        let raw: Vec<f64> = (0..40).map(|k| offset + i as f64 + spread * ((k * 7 % 13) as f64 - 6.0)).collect();
        metrics.insert(name.to_string(), MetricSummary::from_values(name, raw).unwrap());
    }
    EvalReport {
        protocol: Protocol {
            run: run.into(),
            split,
            seed: 1,
            n: 40,
            model_family: Family::Fm,
            test_set: "abc".into(),
            test_size: 10,
            dtw_units: "standardized lateral".into(),
        },
        metrics,
        pca: PcaCoords { explained_ratio: vec![0.7, 0.2], real: vec![[0.0, 1.0]], generated: vec![[1.0, 0.5]] },
        paths: PlotPaths {
            real: vec![vec![[47.0, 8.0], [47.1, 8.1], [47.2, 8.3]]],
            generated: vec![vec![[47.0, 8.05], [47.15, 8.1]]],
        },
    }
}

#[test]
fn identical_runs_are_not_flagged() {
    let base = report("baseline", 1.0, 5.0, 0.1);
    let same = report("transfer", 0.05, 5.0, 0.1);
    let table = significance_table(&[same], &base).unwrap();
    assert_eq!(table.metrics, ["e_distance", "mmd", "dtw"]);
    let row = &table.rows[0];
    assert_eq!(row.label, "0.05");
    assert!(row.cells.iter().all(|c| !c.improved && c.p.unwrap() > 0.99));
    assert_eq!(table.rows[1].label, "baseline");
    assert!(table.rows[1].cells.iter().all(|c| c.p.is_none()));
}

#[test]
fn clear_improvements_are_flagged() {
    let base = report("baseline", 1.0, 5.0, 0.1);
    let better = report("transfer", 1.0, 3.0, 0.1);
    let worse = report("transfer", 0.2, 7.0, 0.1);
    let table = significance_table(&[better, worse], &base).unwrap();
    assert!(table.rows[0].cells.iter().all(|c| c.improved && c.p.unwrap() < 1e-6));
    assert!(table.rows[1].cells.iter().all(|c| !c.improved && c.p.unwrap() < 1e-6));

    let text = table.to_text();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("Split"));
    assert_eq!(lines[0].matches(" | ").count(), 3);
    assert_eq!(lines[2].matches(" *").count(), 3);
    assert!(!lines[3].contains('*'));
    assert!(lines.last().unwrap().contains("Welch"));

    let csv = table.to_csv().unwrap();
    assert!(csv.starts_with("split,e_distance_mean,e_distance_std,e_distance_p,e_distance_improved,mmd_mean"));
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().last().unwrap().starts_with("baseline,"));
}

#[test]
fn missing_raw_values_are_an_error() {
    let base = report("baseline", 1.0, 5.0, 0.1);
    let mut r = report("transfer", 0.5, 5.0, 0.1);
    r.metrics.remove("mmd");
    assert!(matches!(significance_table(&[r], &base), Err(LabError::MissingRaw(_))));
}

#[test]
fn report_json_round_trip() {
    let r = report("transfer", 0.2, 1.0, 0.37);
    let json = r.to_json().unwrap();
    assert!(json.ends_with("}\n"));
    assert!(json.contains("\"N\": 40"));
    assert_eq!(EvalReport::from_json(&json).unwrap(), r);
    assert_eq!(EvalReport::from_json(&json).unwrap().to_json().unwrap(), json);
}

#[test]
fn svg_structure_and_colors() {
    let r = report("transfer", 0.05, 1.0, 0.1);
    let svg = overlay_svg("DM 0.05 <LSZH & EIDW>", &r.paths.real, &r.paths.generated, 0.3).unwrap();
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    assert!(svg.ends_with("</svg>\n"));
    assert!(svg.contains(&format!("stroke=\"{REAL_COLOR}\"")));
    assert!(svg.contains(&format!("stroke=\"{GENERATED_COLOR}\"")));
    assert!(svg.contains("&lt;LSZH &amp; EIDW&gt;"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert_eq!(svg, overlay_svg("DM 0.05 <LSZH & EIDW>", &r.paths.real, &r.paths.generated, 0.3).unwrap());

    let pca = pca_svg("PCA", &r.pca.real, &r.pca.generated);
    assert!(pca.starts_with("<svg") && pca.ends_with("</svg>\n"));
    assert_eq!(pca.matches("<circle").count(), 2);
    assert!(pca.contains(&format!("fill=\"{REAL_COLOR}\"")));
    assert!(pca.contains(&format!("fill=\"{GENERATED_COLOR}\"")));
}

#[test]
fn empty_or_degenerate_plots_still_render() {
    let svg = overlay_svg("empty", &[], &[], 0.3).unwrap();
    assert!(svg.ends_with("</svg>\n"));
    let one = vec![vec![[47.0, 8.0]; 4]];
    let svg = overlay_svg("still", &one, &one, 0.3).unwrap();
    assert!(!svg.contains("NaN") && !svg.contains("inf"));
}
