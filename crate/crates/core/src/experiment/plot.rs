//! Minimal SVG line charts for sweep results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::metrics::{MetricsRecord, Scenario};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Snr,
    Psr,
}

impl SweepKind {
    fn name(self) -> &'static str {
        match self {
            SweepKind::Snr => "snr",
            SweepKind::Psr => "psr",
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            SweepKind::Snr => "SNR (dB)",
            SweepKind::Psr => "PSR (dB)",
        }
    }

    fn x(self, r: &MetricsRecord) -> Option<f64> {
        match self {
            SweepKind::Snr => Some(r.snr_db),
            SweepKind::Psr => r.psr_db,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    EveAccuracy,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Mse, Metric::EveAccuracy];

    fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::EveAccuracy => "eve_accuracy",
        }
    }

    fn y(self, r: &MetricsRecord) -> f64 {
        match self {
            Metric::Mse => r.mse,
            Metric::EveAccuracy => r.eve_accuracy,
        }
    }
}

/// Points per scenario, sorted by x. Records without an x value (no
/// perturbation on a PSR sweep) are dropped.
fn series(records: &[MetricsRecord], sweep: SweepKind, metric: Metric) -> BTreeMap<Scenario, Vec<(f64, f64)>> {
    let mut out: BTreeMap<Scenario, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        if let Some(x) = sweep.x(r) {
            out.entry(r.scenario).or_default().push((x, metric.y(r)));
        }
    }
    for pts in out.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

pub fn render_chart(records: &[MetricsRecord], sweep: SweepKind, metric: Metric) -> Result<String> {
    let data = series(records, sweep, metric);
    if data.is_empty() {
        return Err(Error::Config(format!("no {} points to plot", sweep.name())));
    }
    let all = || data.values().flatten();
    let (x_lo, x_hi) = range(all().map(|p| p.0));
    let (y_lo, y_hi) = range(all().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        w,
        r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" stroke="black" fill="none"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x_lo + t * (x_hi - x_lo);
        let yv = y_lo + t * (y_hi - y_lo);
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"#, sx(xv), bottom + 18.0);
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.4}</text>"#, left - 6.0, sy(yv) + 4.0);
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        sweep.axis_label()
    );
    let _ = writeln!(w, r#"<text x="15" y="{:.2}" transform="rotate(-90 15 {:.2})" text-anchor="middle">{}</text>"#, HEIGHT / 2.0, HEIGHT / 2.0, metric.name());

    for (i, (scenario, pts)) in data.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            w,
            r#"<polyline class="{}" points="{}" stroke="{color}" fill="none" stroke-width="2"/>"#,
            scenario.as_str(),
            coords.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(w, r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{}</text>"#, right - 100.0, scenario.as_str());
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes `<sweep>_<metric>.svg` for both metrics and returns the paths.
pub fn emit_plots(records: &[MetricsRecord], out_dir: &Path, sweep: SweepKind) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Config("cannot plot an empty record set".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let mut paths = Vec::new();
    for metric in Metric::ALL {
        let path = out_dir.join(format!("{}_{}.svg", sweep.name(), metric.name()));
        fs::write(&path, render_chart(records, sweep, metric)?).map_err(|e| Error::file(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
