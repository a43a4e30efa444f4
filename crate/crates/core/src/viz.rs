//! Dependency-free svg renders of error traces, binned error profiles, and
//! signed error grids, plus table number formatting.

use crate::dataset::Day;
use crate::detector::DriftEvent;
use crate::explainer::{LeaProfile, LeagramGrid};
use crate::metrics::ErrorSeries;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 55.0;

/// Format with six significant digits for table output.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn palette(i: usize) -> &'static str {
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    COLORS[i % COLORS.len()]
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Canvas {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        body.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        body.push_str(&format!(
            "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            escape(title)
        ));
        Canvas { body }
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        let x0 = MARGIN;
        let y0 = HEIGHT - MARGIN;
        self.body.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n",
            WIDTH - MARGIN
        ));
        self.body.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{MARGIN}\" stroke=\"black\"/>\n"
        ));
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            (WIDTH) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        ));
        self.body.push_str(&format!(
            "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        ));
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi <= lo {
        return (out_lo + out_hi) / 2.0;
    }
    out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
}

/// Per-date error traces for one or more schemes, with optional drift-event
/// markers.
pub fn error_trace_svg(
    title: &str,
    traces: &[(String, &ErrorSeries)],
    events: &[DriftEvent],
) -> String {
    let mut canvas = Canvas::new(title);
    canvas.axes("date", "nrmse");
    let all_dates: Vec<Day> = traces
        .iter()
        .flat_map(|(_, s)| s.dates())
        .collect();
    let all_values: Vec<f64> = traces.iter().flat_map(|(_, s)| s.values()).collect();
    if all_dates.is_empty() {
        return canvas.finish();
    }
    let (x_lo, x_hi) = (
        all_dates.iter().map(|d| d.0).min().unwrap() as f64,
        all_dates.iter().map(|d| d.0).max().unwrap() as f64,
    );
    let y_hi = all_values.iter().fold(0.0_f64, |a, &b| a.max(b)).max(1e-9);
    for (i, (label, series)) in traces.iter().enumerate() {
        let points: Vec<String> = series
            .entries
            .iter()
            .map(|e| {
                let x = scale(e.date.0 as f64, x_lo, x_hi, MARGIN, WIDTH - MARGIN);
                let y = scale(e.nrmse, 0.0, y_hi, HEIGHT - MARGIN, MARGIN);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        canvas.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>\n",
            points.join(" "),
            palette(i)
        ));
        canvas.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{}\">{}</text>\n",
            WIDTH - MARGIN - 120.0,
            MARGIN + 16.0 * i as f64,
            palette(i),
            escape(label)
        ));
    }
    for ev in events {
        let x = scale(ev.date.0 as f64, x_lo, x_hi, MARGIN, WIDTH - MARGIN);
        canvas.body.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{MARGIN}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n",
            HEIGHT - MARGIN
        ));
    }
    canvas.finish()
}

/// Binned error curves for several splits sharing one set of edges.
pub fn leaplot_svg(title: &str, profiles: &[(String, &LeaProfile)]) -> String {
    let mut canvas = Canvas::new(title);
    canvas.axes("feature value (bin midpoint)", "nrmse");
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_hi: f64 = 1e-12;
    for (_, p) in profiles {
        x_lo = x_lo.min(p.bin_edges[0]);
        x_hi = x_hi.max(*p.bin_edges.last().unwrap());
        for e in p.bin_errors.iter().flatten() {
            y_hi = y_hi.max(*e);
        }
    }
    for (i, (label, profile)) in profiles.iter().enumerate() {
        let mut points = Vec::new();
        for b in 0..profile.n_bins() {
            if let Some(err) = profile.bin_errors[b] {
                let mid = (profile.bin_edges[b] + profile.bin_edges[b + 1]) / 2.0;
                let x = scale(mid, x_lo, x_hi, MARGIN, WIDTH - MARGIN);
                let y = scale(err, 0.0, y_hi, HEIGHT - MARGIN, MARGIN);
                points.push(format!("{x:.2},{y:.2}"));
            }
        }
        canvas.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            points.join(" "),
            palette(i)
        ));
        canvas.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{}\">{}</text>\n",
            WIDTH - MARGIN - 140.0,
            MARGIN + 16.0 * i as f64,
            palette(i),
            escape(label)
        ));
    }
    canvas.finish()
}

/// Diverging fill: blue for underestimation, red for overestimation.
fn diverging_color(ne: f64, max_abs: f64) -> String {
    let t = (ne / max_abs).clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        let s = 1.0 - t;
        (255.0, 255.0 * s, 255.0 * s)
    } else {
        let s = 1.0 + t;
        (255.0 * s, 255.0 * s, 255.0)
    };
    format!("rgb({},{},{})", r.round(), g.round(), b.round())
}

/// Date x quantile-bin grid of signed normalized errors.
pub fn leagram_svg(title: &str, grid: &LeagramGrid) -> String {
    let mut canvas = Canvas::new(title);
    canvas.axes("date", "feature quantile bin");
    if grid.dates.is_empty() {
        return canvas.finish();
    }
    let (x_lo, x_hi) = (
        grid.dates.first().unwrap().0 as f64,
        grid.dates.last().unwrap().0 as f64,
    );
    let cell_w = ((WIDTH - 2.0 * MARGIN) / grid.dates.len() as f64).max(1.0);
    let cell_h = ((HEIGHT - 2.0 * MARGIN) / grid.n_bins as f64).max(1.0);
    let max_abs = grid
        .cells
        .values()
        .fold(1e-12_f64, |a, &b| a.max(b.abs()));
    for ((date, bin), ne) in &grid.cells {
        let x = scale(date.0 as f64, x_lo, x_hi, MARGIN, WIDTH - MARGIN - cell_w);
        let y = scale(
            *bin as f64,
            0.0,
            grid.n_bins as f64,
            HEIGHT - MARGIN - cell_h,
            MARGIN,
        );
        canvas.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell_w:.2}\" height=\"{cell_h:.2}\" fill=\"{}\"/>\n",
            diverging_color(*ne, max_abs)
        ));
    }
    canvas.finish()
}
