//! Minimal SVG rendering for the pipeline's figures: line plots for
//! mean/STD curves and sample paths, bar overlays for distribution
//! checkpoints. No styling engine, just shapes and text.

use std::path::Path;

use crate::format::report::Histogram;
use crate::format::write_text;
use crate::Result;

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 46.0;
const MARGIN_B: f64 = 54.0;

pub const COLOR_TRUTH: &str = "#1f77b4";
pub const COLOR_MODEL: &str = "#d62728";
const PATH_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series<'a> {
    pub label: Option<String>,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub color: &'a str,
    pub dashed: bool,
}

/// Color for the i-th unnamed sample path.
pub fn path_color(i: usize) -> &'static str {
    PATH_COLORS[i % PATH_COLORS.len()]
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn from_ranges(xs: (f64, f64), ys: (f64, f64)) -> Frame {
        let (mut x_lo, mut x_hi) = xs;
        let (mut y_lo, mut y_hi) = ys;
        if !(x_hi > x_lo) {
            x_lo -= 0.5;
            x_hi += 0.5;
        }
        if !(y_hi > y_lo) {
            y_lo -= 1.0;
            y_hi += 1.0;
        }
        let pad = 0.04 * (y_hi - y_lo);
        Frame {
            x_lo,
            x_hi,
            y_lo: y_lo - pad,
            y_hi: y_hi + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target as f64;
    let mag = 10f64.powf(raw.abs().log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    step * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor() as i32).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s == "-0" || s.starts_with("-0.") && s[3..].chars().all(|c| c == '0') {
        s.replacen('-', "", 1)
    } else {
        s
    }
}

fn axes(svg: &mut String, frame: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
    svg.push_str(&format!(
        "<rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n",
        x1 - x0,
        y0 - y1
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" font-family=\"sans-serif\">{}</text>\n",
        0.5 * (x0 + x1),
        title
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">{}</text>\n",
        0.5 * (x0 + x1),
        HEIGHT - 12.0,
        xlabel
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        0.5 * (y0 + y1),
        0.5 * (y0 + y1),
        ylabel
    ));

    let x_step = nice_step(frame.x_hi - frame.x_lo, 6);
    let mut t = (frame.x_lo / x_step).ceil() * x_step;
    while t <= frame.x_hi + 1e-12 * x_step {
        let px = frame.px(t);
        svg.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
            y0 + 19.0,
            tick_label(t, x_step)
        ));
        t += x_step;
    }
    let y_step = nice_step(frame.y_hi - frame.y_lo, 6);
    let mut t = (frame.y_lo / y_step).ceil() * y_step;
    while t <= frame.y_hi + 1e-12 * y_step {
        let py = frame.py(t);
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
            x0 - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
            x0 - 8.0,
            py + 4.0,
            tick_label(t, y_step)
        ));
        t += y_step;
    }
}

fn legend(svg: &mut String, entries: &[(String, &str, bool)]) {
    let mut y = MARGIN_T + 16.0;
    let x = WIDTH - MARGIN_R - 170.0;
    for (label, color, dashed) in entries {
        let dash = if *dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>\n",
            x + 28.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            x + 34.0,
            y + 4.0,
            label
        ));
        y += 18.0;
    }
}

/// Overlayed line series with axes and a legend for labeled series.
pub fn line_plot(
    path: &Path,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series<'_>],
) -> Result<()> {
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in series {
        for &x in s.xs {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
        }
        for &y in s.ys {
            if y.is_finite() {
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
        }
    }
    let frame = Frame::from_ranges((x_lo, x_hi), (y_lo, y_hi));
    let mut svg = svg_open();
    axes(&mut svg, &frame, title, xlabel, ylabel);
    for s in series {
        let pts: Vec<String> = s
            .xs
            .iter()
            .zip(s.ys.iter())
            .map(|(&x, &y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"{dash}/>\n",
            pts.join(" "),
            s.color
        ));
    }
    let entries: Vec<(String, &str, bool)> = series
        .iter()
        .filter_map(|s| s.label.clone().map(|l| (l, s.color, s.dashed)))
        .collect();
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    write_text(path, &svg)
}

/// Two overlaid density histograms on shared bins.
pub fn histogram_plot(
    path: &Path,
    title: &str,
    xlabel: &str,
    h: &Histogram,
    label_a: &str,
    label_b: &str,
) -> Result<()> {
    let y_hi = h
        .density_a
        .iter()
        .chain(h.density_b.iter())
        .fold(0.0f64, |m, &d| m.max(d));
    let frame = Frame::from_ranges(
        (h.edges[0], *h.edges.last().unwrap()),
        (0.0, y_hi.max(1e-12)),
    );
    let mut svg = svg_open();
    axes(&mut svg, &frame, title, xlabel, "density");
    let base = frame.py(0.0);
    for (densities, color) in [(&h.density_a, COLOR_TRUTH), (&h.density_b, COLOR_MODEL)] {
        for (i, &d) in densities.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let x = frame.px(h.edges[i]);
            let w = frame.px(h.edges[i + 1]) - x;
            let y = frame.py(d);
            svg.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.45\"/>\n",
                base - y
            ));
        }
    }
    legend(
        &mut svg,
        &[
            (label_a.to_string(), COLOR_TRUTH, false),
            (label_b.to_string(), COLOR_MODEL, false),
        ],
    );
    svg.push_str("</svg>\n");
    write_text(path, &svg)
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    )
}
