//! Minimal SVG rendering for regret curves: mean polyline plus a ±1 std
//! band per series, labeled axes, and a legend. No rendering dependency,
//! and the output is deterministic, so plots diff cleanly in tests.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::output::SummarySeries;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Legend labels: file stems, falling back to the full path when stems
/// collide (several runs all produce a `summary.csv`).
pub fn series_labels(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string())
        })
        .collect();
    paths
        .iter()
        .zip(&stems)
        .map(|(path, stem)| {
            if stems.iter().filter(|s| *s == stem).count() > 1 {
                path.display().to_string()
            } else {
                stem.clone()
            }
        })
        .collect()
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_LEFT + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_values(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.1e}")
    } else if a >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn render_regret_plot(series: &[SummarySeries], labels: &[String]) -> String {
    let x_min = series.iter().flat_map(|s| s.t.iter()).cloned().fold(f64::INFINITY, f64::min);
    let x_max = series.iter().flat_map(|s| s.t.iter()).cloned().fold(1.0, f64::max);
    let mut y_min = 0.0f64;
    let mut y_max = 1e-9f64;
    for s in series {
        for i in 0..s.t.len() {
            y_min = y_min.min(s.mean[i] - s.std[i]);
            y_max = y_max.max(s.mean[i] + s.std[i]);
        }
    }
    y_max *= 1.05;
    let frame = Frame {
        x_min,
        x_max: x_max.max(x_min + 1.0),
        y_min,
        y_max,
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // Axes and ticks.
    let x0 = frame.x(frame.x_min);
    let x1 = frame.x(frame.x_max);
    let y0 = frame.y(frame.y_min);
    let y1 = frame.y(frame.y_max);
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black" stroke-width="1"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black" stroke-width="1"/>"#
    );
    for v in tick_values(frame.x_min, frame.x_max, 6) {
        let x = frame.x(v);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            y0 + 20.0,
            fmt_tick(v)
        );
    }
    for v in tick_values(frame.y_min, frame.y_max, 6) {
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black" stroke-width="1"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
            x0 - 9.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">t</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {0:.2})">R(t)</text>"#,
        (y0 + y1) / 2.0
    );

    // Bands first so every mean line stays visible.
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut points = String::new();
        for i in 0..s.t.len() {
            let _ = write!(
                points,
                "{:.2},{:.2} ",
                frame.x(s.t[i]),
                frame.y(s.mean[i] + s.std[i])
            );
        }
        for i in (0..s.t.len()).rev() {
            let _ = write!(
                points,
                "{:.2},{:.2} ",
                frame.x(s.t[i]),
                frame.y(s.mean[i] - s.std[i])
            );
        }
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            points.trim_end()
        );
    }
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut points = String::new();
        for i in 0..s.t.len() {
            let _ = write!(points, "{:.2},{:.2} ", frame.x(s.t[i]), frame.y(s.mean[i]));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.trim_end()
        );
    }

    // Legend, argument order.
    for (idx, label) in labels.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let y = MARGIN_TOP + 8.0 + idx as f64 * 18.0;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="3"/>"#,
            MARGIN_LEFT + 10.0,
            MARGIN_LEFT + 34.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            MARGIN_LEFT + 40.0,
            y + 4.0,
            escape(label)
        );
    }

    out.push_str("</svg>\n");
    out
}
