//! Minimal self-contained SVG output for line plots and grid maps.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Lower and upper edges of a shaded band.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<PlotSeries>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const L: f64 = 70.0;
const R: f64 = 160.0;
const T: f64 = 40.0;
const B: f64 = 50.0;

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

pub fn line_plot(plot: &LinePlot) -> String {
    let (x0, x1) = finite_range(plot.series.iter().flat_map(|s| s.x.iter().copied()));
    let ys = plot.series.iter().flat_map(|s| {
        let band = s
            .band
            .iter()
            .flat_map(|(lo, hi)| lo.iter().chain(hi.iter()).copied());
        s.y.iter().copied().chain(band)
    });
    let (y0, y1) = finite_range(ys);
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);
    let mut out = String::new();
    let _ = writeln!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">");
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        (L + W - R) / 2.0,
        esc(&plot.title)
    );
    let _ = writeln!(
        out,
        "<rect x=\"{L}\" y=\"{T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - L - R,
        H - T - B
    );
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            px(xv),
            H - B + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            L - 6.0,
            py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        (L + W - R) / 2.0,
        H - 12.0,
        esc(&plot.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        (T + H - B) / 2.0,
        (T + H - B) / 2.0,
        esc(&plot.y_label)
    );
    for (i, s) in plot.series.iter().enumerate() {
        let c = color(i);
        if let Some((lo, hi)) = &s.band {
            let mut pts: Vec<String> =
                s.x.iter()
                    .zip(hi)
                    .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                    .collect();
            pts.extend(
                s.x.iter()
                    .zip(lo)
                    .rev()
                    .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))),
            );
            let _ = writeln!(
                out,
                "<polygon points=\"{}\" fill=\"{c}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
                pts.join(" ")
            );
        }
        let pts: Vec<String> =
            s.x.iter()
                .zip(&s.y)
                .filter(|(_, y)| y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
        let ly = T + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{c}\" stroke-width=\"3\"/>",
            W - R + 10.0,
            W - R + 30.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            W - R + 36.0,
            ly + 4.0,
            esc(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

/// One square of a grid map.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSquare {
    pub x: i32,
    pub y: i32,
    pub wall: bool,
    /// Palette index and opacity of the fill.
    pub fill: Option<(usize, f64)>,
    pub text: String,
    /// Radius fraction of a marker circle, 0 for none.
    pub marker: f64,
}

pub fn grid_map(
    title: &str,
    size: i32,
    squares: &[GridSquare],
    legend: &[(usize, String)],
) -> String {
    let cell = 48.0;
    let side = cell * f64::from(size);
    let (w, h) = (side + 180.0, side + 50.0);
    let mut out = String::new();
    let _ = writeln!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">");
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        side / 2.0 + 10.0,
        esc(title)
    );
    for s in squares {
        let (x, y) = (10.0 + cell * f64::from(s.x), 40.0 + cell * f64::from(s.y));
        let base = if s.wall { "#333333" } else { "#ffffff" };
        let _ = writeln!(out, "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{base}\" stroke=\"#999999\"/>");
        if let Some((c, a)) = s.fill {
            let _ = writeln!(out, "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\" fill-opacity=\"{a:.3}\"/>", color(c));
        }
        if s.marker > 0.0 {
            let _ = writeln!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"{:.2}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>",
                x + cell / 2.0,
                y + cell / 2.0,
                s.marker.min(1.0) * cell * 0.45
            );
        }
        if !s.text.is_empty() {
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                esc(&s.text)
            );
        }
    }
    for (i, (c, label)) in legend.iter().enumerate() {
        let y = 50.0 + 20.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{y}\" width=\"14\" height=\"14\" fill=\"{}\"/>",
            side + 24.0,
            color(*c)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            side + 44.0,
            y + 11.0,
            esc(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
