//! Minimal SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Renders the series as polylines with axis ranges in the corners.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    if let Some(s) = series.iter().find(|s| s.x.len() != s.y.len()) {
        return Err(Error::dim(format!("series '{}' has {} x and {} y values", s.label, s.x.len(), s.y.len())));
    }
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect x="{m}" y="{m}" width="{w}" height="{h}" fill="none" stroke="black"/>"#, m = MARGIN, w = W - 2.0 * MARGIN, h = H - 2.0 * MARGIN);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, escape(y_label));
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}">{x0:.4e}</text>"#, H - MARGIN + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{x1:.4e}</text>"#, W - MARGIN, H - MARGIN + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y0:.4e}</text>"#, MARGIN - 3.0, H - MARGIN);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y1:.4e}</text>"#, MARGIN - 3.0, MARGIN + 10.0);
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser
            .x
            .iter()
            .zip(&ser.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = MARGIN + 15.0 + 15.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, W - MARGIN - 5.0 - 100.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_line_plot(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    fs::write(path, line_plot(title, x_label, y_label, series)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polylines_span_the_frame() {
        let s = Series {
            label: "a<1>".into(),
            x: vec![0.0, 1.0, 2.0],
            y: vec![-1.0, 0.0, 1.0],
        };
        let svg = line_plot("t", "x", "y", &[s]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"points="50.00,350.00 320.00,200.00 590.00,50.00""#));
        assert!(svg.contains("a&lt;1&gt;"));
    }

    #[test]
    fn flat_and_empty_series_render() {
        let s = Series {
            label: "c".into(),
            x: vec![0.0, 1.0],
            y: vec![2.0, 2.0],
        };
        assert!(line_plot("t", "x", "y", &[s]).unwrap().contains("polyline"));
        assert!(line_plot("t", "x", "y", &[]).is_ok());
        let bad = Series {
            label: "b".into(),
            x: vec![0.0],
            y: vec![],
        };
        assert!(line_plot("t", "x", "y", &[bad]).is_err());
    }
}
