//! Minimal SVG 1.1 line and scatter plots.

use std::fmt::Write as _;

use semidiscrete::analysis::ConvergenceReport;

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One named curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Maps data coordinates (already log-transformed where applicable) to
/// pixels inside the plotting area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    fn around(points: impl Iterator<Item = (f64, f64)>) -> Option<Self> {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            f.x_min = f.x_min.min(x);
            f.x_max = f.x_max.max(x);
            f.y_min = f.y_min.min(y);
            f.y_max = f.y_max.max(y);
        }
        if !f.x_min.is_finite() {
            return None;
        }
        if f.x_max == f.x_min {
            f.x_min -= 0.5;
            f.x_max += 0.5;
        }
        if f.y_max == f.y_min {
            let pad = f.y_min.abs().max(1.0) * 0.05;
            f.y_min -= pad;
            f.y_max += pad;
        } else {
            let pad = 0.05 * (f.y_max - f.y_min);
            f.y_min -= pad;
            f.y_max += pad;
        }
        Some(f)
    }

    pub fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }

    pub fn inv_px(&self, px: f64) -> f64 {
        self.x_min + (px - LEFT) / (WIDTH - LEFT - RIGHT) * (self.x_max - self.x_min)
    }

    pub fn inv_py(&self, py: f64) -> f64 {
        self.y_min + (HEIGHT - BOTTOM - py) / (HEIGHT - TOP - BOTTOM) * (self.y_max - self.y_min)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Round numbers spanning `[lo, hi]`, about `target` of them.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#
        );
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(out, "<title>{}</title>", escape(title));
        let _ = writeln!(
            out,
            r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(title)
        );
        Canvas { out }
    }

    fn axes(
        &mut self,
        f: &Frame,
        x_label: &str,
        y_label: &str,
        x_ticks: &[(f64, String)],
        y_ticks: &[(f64, String)],
    ) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let o = &mut self.out;
        let _ = writeln!(
            o,
            r#"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for (v, label) in x_ticks {
            let x = f.px(*v);
            let _ = writeln!(
                o,
                r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.1}" stroke="black"/>"#,
                y0 + 5.0
            );
            let _ = writeln!(
                o,
                r#"<text x="{x:.2}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                y0 + 18.0,
                escape(label)
            );
        }
        for (v, label) in y_ticks {
            let y = f.py(*v);
            let _ = writeln!(
                o,
                r#"<line x1="{:.1}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#,
                x0 - 5.0
            );
            let _ = writeln!(
                o,
                r#"<text x="{:.1}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                x0 - 8.0,
                y + 4.0,
                escape(label)
            );
        }
        let _ = writeln!(
            o,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 15.0,
            escape(x_label)
        );
        let _ = writeln!(
            o,
            r#"<text x="20" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 20 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn polyline(&mut self, f: &Frame, pts: &[(f64, f64)], color: &str, class: &str, label: &str) {
        let mut coords = String::new();
        for (x, y) in pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            if !coords.is_empty() {
                coords.push(' ');
            }
            let _ = write!(coords, "{:.3},{:.3}", f.px(*x), f.py(*y));
        }
        let _ = writeln!(
            self.out,
            r#"<polyline class="{class}" data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>"#,
            escape(label)
        );
    }

    fn legend(&mut self, entries: &[(String, &str)]) {
        let x = WIDTH - RIGHT + 15.0;
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * i as f64;
            let _ = writeln!(
                self.out,
                r#"<line x1="{x}" y1="{y}" x2="{:.1}" y2="{y}" stroke="{color}" stroke-width="2"/>"#,
                x + 20.0
            );
            let _ = writeln!(
                self.out,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
                x + 26.0,
                y + 4.0,
                escape(label)
            );
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    ticks(lo, hi, 6)
        .into_iter()
        .map(|v| (v, tick_label(v)))
        .collect()
}

/// Line plot with one polyline per series. `None` when there is nothing to
/// draw.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Option<String> {
    let frame = Frame::around(series.iter().flat_map(|s| s.points.iter().copied()))?;
    let mut c = Canvas::new(title);
    c.axes(
        &frame,
        x_label,
        y_label,
        &linear_ticks(frame.x_min, frame.x_max),
        &linear_ticks(frame.y_min, frame.y_max),
    );
    let mut legend = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        c.polyline(&frame, &s.points, color, "series", &s.label);
        legend.push((s.label.clone(), color));
    }
    c.legend(&legend);
    Some(c.finish())
}

/// Frame used by [`convergence_plot`], in `log10` data units.
pub fn convergence_frame(reports: &[ConvergenceReport]) -> Option<Frame> {
    Frame::around(reports.iter().flat_map(|r| {
        r.deltas
            .iter()
            .zip(&r.l2_errors)
            .filter(|(_, e)| **e > 0.0)
            .map(|(d, e)| (d.log10(), e.log10()))
    }))
}

/// Log-log scatter of strong errors with each report's fitted power law.
pub fn convergence_plot(title: &str, reports: &[ConvergenceReport]) -> Option<String> {
    let frame = convergence_frame(reports)?;
    let mut c = Canvas::new(title);
    let decades = |lo: f64, hi: f64| -> Vec<(f64, String)> {
        let (a, b) = (lo.ceil() as i32, hi.floor() as i32);
        let ticks: Vec<(f64, String)> = (a..=b).map(|k| (k as f64, format!("1e{k}"))).collect();
        if ticks.len() >= 2 {
            ticks
        } else {
            linear_ticks(lo, hi)
                .into_iter()
                .map(|(v, _)| (v, format!("{:.2e}", 10f64.powf(v))))
                .collect()
        }
    };
    c.axes(
        &frame,
        "step size (log scale)",
        "L2 error at T (log scale)",
        &decades(frame.x_min, frame.x_max),
        &decades(frame.y_min, frame.y_max),
    );
    let mut legend = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (d, e) in r
            .deltas
            .iter()
            .zip(&r.l2_errors)
            .filter(|(_, e)| **e > 0.0 && e.is_finite())
        {
            let _ = writeln!(
                c.out,
                r#"<circle class="point" cx="{:.3}" cy="{:.3}" r="3.5" fill="{color}"/>"#,
                frame.px(d.log10()),
                frame.py(e.log10())
            );
        }
        if r.fitted_order.is_finite() && r.fit_intercept.is_finite() {
            // The fit is ln(e) = intercept + order ln(d); redraw it in log10.
            let (lo, hi) = r
                .deltas
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| {
                    (a.min(*d), b.max(*d))
                });
            let line = |d: f64| {
                (
                    d.log10(),
                    (r.fit_intercept + r.fitted_order * d.ln()) / std::f64::consts::LN_10,
                )
            };
            c.polyline(&frame, &[line(lo), line(hi)], color, "fit", r.scheme.name());
        }
        legend.push((format!("{} (order {:.3})", r.scheme, r.fitted_order), color));
    }
    c.legend(&legend);
    Some(c.finish())
}

/// Parses the `points` attribute of every polyline with the given class.
pub fn polylines(svg: &str, class: &str) -> Vec<Vec<(f64, f64)>> {
    let marker = format!(r#"<polyline class="{class}""#);
    svg.lines()
        .filter(|l| l.starts_with(&marker))
        .filter_map(|l| {
            let start = l.find(r#"points=""#)? + 8;
            let end = start + l[start..].find('"')?;
            Some(
                l[start..end]
                    .split_whitespace()
                    .filter_map(|p| {
                        let (x, y) = p.split_once(',')?;
                        Some((x.parse().ok()?, y.parse().ok()?))
                    })
                    .collect(),
            )
        })
        .collect()
}
