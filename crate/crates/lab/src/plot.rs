//! Minimal deterministic SVG plots: lateral overlays and PCA scatters.

use std::fmt::Write as _;

use trajlab_core::kinematics::{ewma_smooth, GeoPath};

use crate::error::Result;

pub const REAL_COLOR: &str = "#d62728";
pub const GENERATED_COLOR: &str = "#1f77b4";

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a [f64; 2]>) -> Self {
        // points are (y, x) pairs: latitude up, longitude right
        let mut f = Frame { x0: f64::INFINITY, x1: f64::NEG_INFINITY, y0: f64::INFINITY, y1: f64::NEG_INFINITY };
        for p in points.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            f.y0 = f.y0.min(p[0]);
            f.y1 = f.y1.max(p[0]);
            f.x0 = f.x0.min(p[1]);
            f.x1 = f.x1.max(p[1]);
        }
        if !f.x0.is_finite() {
            return Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        // equal scale on both axes, centered
        let span = (f.x1 - f.x0).max(f.y1 - f.y0).max(1e-12);
        let (cx, cy) = (0.5 * (f.x0 + f.x1), 0.5 * (f.y0 + f.y1));
        Frame { x0: cx - 0.5 * span, x1: cx + 0.5 * span, y0: cy - 0.5 * span, y1: cy + 0.5 * span }
    }

    fn map(&self, p: &[f64; 2]) -> (f64, f64) {
        let inner = SIZE - 2.0 * MARGIN;
        let x = MARGIN + (p[1] - self.x0) / (self.x1 - self.x0) * inner;
        let y = SIZE - MARGIN - (p[0] - self.y0) / (self.y1 - self.y0) * inner;
        (x, y)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
}

fn legend(out: &mut String) {
    let y = SIZE - 14.0;
    let _ = writeln!(out, r#"<rect x="{MARGIN}" y="{}" width="10" height="10" fill="{REAL_COLOR}"/>"#, y - 9.0);
    let _ = writeln!(out, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11">real</text>"#, MARGIN + 14.0);
    let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{GENERATED_COLOR}"/>"#, MARGIN + 60.0, y - 9.0);
    let _ = writeln!(out, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11">generated</text>"#, MARGIN + 74.0);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Real (red) and generated (blue) lateral paths, EWMA-smoothed for display.
pub fn overlay_svg(title: &str, real: &[Vec<[f64; 2]>], generated: &[Vec<[f64; 2]>], alpha: f64) -> Result<String> {
    let smooth = |paths: &[Vec<[f64; 2]>]| -> Result<Vec<Vec<[f64; 2]>>> {
        paths.iter().map(|p| Ok(ewma_smooth(&GeoPath { points: p.clone() }, alpha)?.points)).collect()
    };
    let (real, generated) = (smooth(real)?, smooth(generated)?);
    let frame = Frame::fit(real.iter().chain(&generated).flatten());
    let mut out = String::new();
    header(&mut out, title);
    for (paths, color, class) in [(&real, REAL_COLOR, "real"), (&generated, GENERATED_COLOR, "generated")] {
        let _ = writeln!(out, r#"<g class="{class}" fill="none" stroke="{color}" stroke-width="1" stroke-opacity="0.5">"#);
        for p in paths.iter() {
            let pts: Vec<String> = p
                .iter()
                .filter(|q| q[0].is_finite() && q[1].is_finite())
                .map(|q| {
                    let (x, y) = frame.map(q);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(out, r#"<polyline points="{}"/>"#, pts.join(" "));
        }
        out.push_str("</g>\n");
    }
    legend(&mut out);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Scatter of the first two principal coordinates.
pub fn pca_svg(title: &str, real: &[[f64; 2]], generated: &[[f64; 2]]) -> String {
    // PCA coordinates are (pc1, pc2); plot pc1 horizontally
    let swap = |v: &[[f64; 2]]| v.iter().map(|p| [p[1], p[0]]).collect::<Vec<_>>();
    let (real, generated) = (swap(real), swap(generated));
    let frame = Frame::fit(real.iter().chain(&generated));
    let mut out = String::new();
    header(&mut out, title);
    for (pts, color, class) in [(&real, REAL_COLOR, "real"), (&generated, GENERATED_COLOR, "generated")] {
        let _ = writeln!(out, r#"<g class="{class}" fill="{color}" fill-opacity="0.6">"#);
        for p in pts.iter().filter(|q| q[0].is_finite() && q[1].is_finite()) {
            let (x, y) = frame.map(p);
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3"/>"#);
        }
        out.push_str("</g>\n");
    }
    legend(&mut out);
    out.push_str("</svg>\n");
    out
}
