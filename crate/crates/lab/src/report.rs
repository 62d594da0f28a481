//! Evaluation reports and the significance table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trajlab_core::metrics::{welch_t_test, MetricSummary};
use trajlab_core::model::Family;

use crate::error::{LabError, Result};

/// Metrics shown in the significance table, in column order.
pub const TABLE_METRICS: [(&str, &str); 3] = [("e_distance", "e-distance"), ("mmd", "MMD"), ("dtw", "DTW")];
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    /// `transfer` for fine-tuned runs, `baseline` for the from-scratch reference.
    pub run: String,
    pub split: f64,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub model_family: Family,
    /// Hash of the held-out test set every run is scored against.
    pub test_set: String,
    pub test_size: usize,
    /// DTW is computed on standardized lateral coordinates.
    pub dtw_units: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PcaCoords {
    pub explained_ratio: Vec<f64>,
    pub real: Vec<[f64; 2]>,
    pub generated: Vec<[f64; 2]>,
}

/// Lateral `(lat, lon)` paths kept for plotting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotPaths {
    pub real: Vec<Vec<[f64; 2]>>,
    pub generated: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub pca: PcaCoords,
    pub paths: PlotPaths,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Result<&MetricSummary> {
        self.metrics.get(name).ok_or_else(|| LabError::MissingRaw(name.into()))
    }

    /// Canonical JSON: fixed field order, sorted metric names, two-space indent.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| LabError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn label(&self) -> String {
        if self.protocol.run == "baseline" {
            "baseline".into()
        } else {
            format!("{:.2}", self.protocol.split)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    /// Welch p-value against the baseline; absent on the baseline row.
    pub p: Option<f64>,
    /// Significant improvement: `p < 0.05` and a lower mean than the baseline.
    pub improved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub metrics: Vec<String>,
    pub rows: Vec<Row>,
}

/// Compare every fraction report with the baseline, metric by metric.
pub fn significance_table(reports: &[EvalReport], baseline: &EvalReport) -> Result<SignificanceTable> {
    let mut rows = Vec::with_capacity(reports.len() + 1);
    for r in reports {
        let mut cells = Vec::with_capacity(TABLE_METRICS.len());
        for (name, _) in TABLE_METRICS {
            let (m, b) = (raw_summary(r, name)?, raw_summary(baseline, name)?);
            let p = welch_t_test(&m.raw, &b.raw)?.p;
            cells.push(Cell { mean: m.mean, std: m.std, p: Some(p), improved: p < SIGNIFICANCE_LEVEL && m.mean < b.mean });
        }
        rows.push(Row { label: r.label(), cells });
    }
    let mut cells = Vec::new();
    for (name, _) in TABLE_METRICS {
        let b = raw_summary(baseline, name)?;
        cells.push(Cell { mean: b.mean, std: b.std, p: None, improved: false });
    }
    rows.push(Row { label: "baseline".into(), cells });
    Ok(SignificanceTable { metrics: TABLE_METRICS.iter().map(|(n, _)| n.to_string()).collect(), rows })
}

fn raw_summary<'a>(r: &'a EvalReport, name: &str) -> Result<&'a MetricSummary> {
    let m = r.metric(name)?;
    if m.raw.is_empty() {
        return Err(LabError::MissingRaw(format!("{name} ({})", r.label())));
    }
    Ok(m)
}

impl SignificanceTable {
    /// Aligned text; significant improvements are marked with `*`.
    pub fn to_text(&self) -> String {
        let headers: Vec<&str> = std::iter::once("Split")
            .chain(self.metrics.iter().map(|m| TABLE_METRICS.iter().find(|(n, _)| n == m).map_or(m.as_str(), |(_, h)| h)))
            .collect();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                std::iter::once(r.label.clone())
                    .chain(r.cells.iter().map(|c| format!("{:.3} ± {:.3}{}", c.mean, c.std, if c.improved { " *" } else { "" })))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..headers.len())
            .map(|i| body.iter().map(|r| r[i].chars().count()).chain([headers[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |cols: Vec<&str>| {
            cols.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let mut out = String::new();
        writeln!(out, "{}", line(headers.clone())).expect("string write");
        writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-")).expect("string write");
        for r in &body {
            writeln!(out, "{}", line(r.iter().map(String::as_str).collect())).expect("string write");
        }
        out.push_str("* significant improvement over the baseline (Welch t-test, p < 0.05)\n");
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["split".to_string()];
        for m in &self.metrics {
            for suffix in ["mean", "std", "p", "improved"] {
                header.push(format!("{m}_{suffix}"));
            }
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.label.clone()];
            for c in &r.cells {
                rec.push(c.mean.to_string());
                rec.push(c.std.to_string());
                rec.push(c.p.map(|p| p.to_string()).unwrap_or_default());
                rec.push(c.improved.to_string());
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}
