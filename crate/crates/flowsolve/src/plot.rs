//! Minimal standalone SVG line plots: one polyline per series, axis ticks,
//! and a legend. Output is deterministic for identical input.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// One named line of `(x, y)` points.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Axis labels and scale flags.
#[derive(Debug, Clone, Default)]
pub struct PlotAxes {
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub title: String,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct AxisScale {
    min: f64,
    max: f64,
    log: bool,
}

impl AxisScale {
    fn build(values: impl Iterator<Item = f64>, log: bool) -> AxisScale {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            let v = if log { v.log10() } else { v };
            min = min.min(v);
            max = max.max(v);
        }
        if min == max {
            min -= 0.5;
            max += 0.5;
        }
        AxisScale { min, max, log }
    }

    fn fraction(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.min) / (self.max - self.min)
    }

    /// Tick positions in data space: decades for log axes, five even
    /// divisions otherwise.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let lo = self.min.floor() as i64;
            let hi = self.max.ceil() as i64;
            (lo..=hi)
                .filter(|&e| {
                    let t = e as f64;
                    t >= self.min - 1e-9 && t <= self.max + 1e-9
                })
                .map(|e| 10f64.powi(e as i32))
                .collect()
        } else {
            (0..=4)
                .map(|k| self.min + (self.max - self.min) * k as f64 / 4.0)
                .collect()
        }
    }
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs();
    if (1e-3..1e4).contains(&mag) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Renders the series to a standalone SVG file.
///
/// Errors on an empty series list, an empty series, or a non-positive value
/// on a log-scaled axis (naming the offending series).
pub fn emit_svg_plot(series: &[PlotSeries], axes: &PlotAxes, path: &Path) -> Result<()> {
    let svg = render_svg(series, axes)?;
    std::fs::write(path, svg)?;
    Ok(())
}

pub fn render_svg(series: &[PlotSeries], axes: &PlotAxes) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("no series to plot".into()));
    }
    for s in series {
        if s.points.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "series '{}' has no points",
                s.name
            )));
        }
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "series '{}' has a non-finite point",
                    s.name
                )));
            }
            if axes.log_x && x <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "series '{}' has x = {x} on a log-scaled x axis",
                    s.name
                )));
            }
            if axes.log_y && y <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "series '{}' has y = {y} on a log-scaled y axis",
                    s.name
                )));
            }
        }
    }

    let xs = AxisScale::build(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        axes.log_x,
    );
    let ys = AxisScale::build(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
        axes.log_y,
    );
    let px = |x: f64| MARGIN_LEFT + xs.fraction(x) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
    let py = |y: f64| HEIGHT - MARGIN_BOTTOM - ys.fraction(y) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if !axes.title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&axes.title)
        );
    }

    // Frame.
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let _ = writeln!(
        out,
        r##"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444" stroke-width="1"/>"##,
        x1 - x0,
        y0 - y1
    );

    for t in xs.ticks() {
        let x = px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{y0:.1}" x2="{x:.2}" y2="{:.1}" stroke="#444" stroke-width="1"/>"##,
            y0 + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            y0 + 18.0,
            format_tick(t)
        );
    }
    for t in ys.ticks() {
        let y = py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.2}" x2="{x0:.1}" y2="{y:.2}" stroke="#444" stroke-width="1"/>"##,
            x0 - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            x0 - 8.0,
            y + 4.0,
            format_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&axes.y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in &s.points {
            let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            pts.trim_end()
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
    }

    // Legend, top-right inside the frame.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = y1 + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            x1 - 150.0,
            x1 - 126.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            x1 - 120.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
