//! Deterministic SVG figures rendered straight from the metrics table.
//! Figures are pure views: every plotted number is a CSV row, series are
//! ordered lexicographically, coordinates are formatted to fixed
//! precision, and identical input bytes yield identical output bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use hybeam_core::{Error, Result};

use crate::metrics::{read_rows, MetricRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Estimation error against seen training channels.
    NmseCurve,
    /// Mean sum rate against ascent iteration.
    SumratePerIteration,
}

impl PlotKind {
    fn metric(self) -> &'static str {
        match self {
            PlotKind::NmseCurve => "nmse_db",
            PlotKind::SumratePerIteration => "sumrate_bits",
        }
    }

    fn labels(self) -> (&'static str, &'static str, &'static str) {
        match self {
            PlotKind::NmseCurve => {
                ("channel estimation on unseen channels", "seen channels", "NMSE (dB)")
            }
            PlotKind::SumratePerIteration => {
                ("sum rate per ascent iteration", "iteration", "sum rate (bits)")
            }
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nmse-curve" => Ok(PlotKind::NmseCurve),
            "sumrate-per-iteration" => Ok(PlotKind::SumratePerIteration),
            other => Err(Error::Config(format!(
                "unknown plot kind {other:?}; expected nmse-curve or sumrate-per-iteration"
            ))),
        }
    }
}

const PALETTE: [&str; 10] = [
    "#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#d08a00", "#16a085", "#7f4f24", "#c2185b",
    "#34495e", "#5d8a00",
];

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 540.0;
const PLOT_LEFT: f64 = 72.0;
const PLOT_RIGHT: f64 = 600.0;
const PLOT_TOP: f64 = 40.0;
const PLOT_BOTTOM: f64 = 490.0;

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        lo -= 1.0;
        hi += 1.0;
    }
    (lo, hi)
}

/// Render rows of the kind's metric to an SVG document.
pub fn render(rows: &[MetricRow], kind: PlotKind) -> Result<String> {
    let metric = kind.metric();
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.metric == metric) {
        let key = format!("{} | {} dB | T={}", row.method, row.snr_db, row.t);
        series.entry(key).or_default().push((row.step as f64, row.value));
    }
    if series.is_empty() {
        return Err(Error::Config(format!("no rows with metric {metric:?} to plot")));
    }
    for points in series.values_mut() {
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }

    let (x_lo, x_hi) = span(series.values().flatten().map(|p| p.0));
    let (mut y_lo, mut y_hi) = span(series.values().flatten().map(|p| p.1));
    let pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;
    let sx = |x: f64| PLOT_LEFT + (x - x_lo) / (x_hi - x_lo) * (PLOT_RIGHT - PLOT_LEFT);
    let sy = |y: f64| PLOT_BOTTOM - (y - y_lo) / (y_hi - y_lo) * (PLOT_BOTTOM - PLOT_TOP);

    let (title, x_label, y_label) = kind.labels();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(svg, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="20" font-size="14">{title}</text>"#,
        PLOT_LEFT
    );

    // Axes and ticks.
    let _ = writeln!(
        svg,
        r##"<rect x="{PLOT_LEFT:.2}" y="{PLOT_TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444444"/>"##,
        PLOT_RIGHT - PLOT_LEFT,
        PLOT_BOTTOM - PLOT_TOP
    );
    for i in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let px = sx(fx);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{PLOT_BOTTOM:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444444"/>"##,
            PLOT_BOTTOM + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{fx:.1}</text>"#,
            PLOT_BOTTOM + 20.0
        );
        let fy = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let py = sy(fy);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{PLOT_LEFT:.2}" y2="{py:.2}" stroke="#444444"/>"##,
            PLOT_LEFT - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{fy:.2}</text>"#,
            PLOT_LEFT - 9.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 40.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" transform="rotate(-90 18 {:.2})" text-anchor="middle">{y_label}</text>"#,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0
    );

    // Series polylines plus a side legend, both in sorted key order.
    for (idx, (key, points)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut path = String::new();
        for (x, y) in points {
            let _ = write!(path, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        for (x, y) in points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                sx(*x),
                sy(*y)
            );
        }
        let ly = PLOT_TOP + 14.0 * idx as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="3"/>"#,
            PLOT_RIGHT + 12.0,
            ly - 4.0,
            PLOT_RIGHT + 30.0,
            ly - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="10">{key}</text>"#,
            PLOT_RIGHT + 36.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Read a metrics CSV and write the figure.
pub fn plot_file(metrics: &Path, kind: PlotKind, out: &Path) -> Result<()> {
    let rows = read_rows(metrics)?;
    let svg = render(&rows, kind)?;
    std::fs::write(out, svg)?;
    Ok(())
}
