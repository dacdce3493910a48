//! Standalone SVG 1.1 charts.

use std::fmt::Write;

use crate::experiments::CurvePoint;
use crate::rdc::{log_view, Mode, Rdc, ThresholdBand};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: &[f64], y_ticks: &[f64]) {
    let (bx, by) = (f.px(f.x0), f.py(f.y0));
    let _ = writeln!(
        out,
        r#"<line x1="{bx:.1}" y1="{by:.1}" x2="{:.1}" y2="{by:.1}" stroke="black"/>
<line x1="{bx:.1}" y1="{by:.1}" x2="{bx:.1}" y2="{:.1}" stroke="black"/>"#,
        f.px(f.x1),
        f.py(f.y1)
    );
    for &t in x_ticks {
        let x = f.px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{by:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{t:.2}</text>"#,
            by + 5.0,
            by + 18.0
        );
    }
    for &t in y_ticks {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{bx:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{t:.3}</text>"#,
            bx - 5.0,
            bx - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>
<text x="14" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 12.0,
        escape(x_label),
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label)
    );
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Bar chart of bin frequencies (or `ln(1 + count)` when `log_scale`), with
/// detected modes as dashed lines and the threshold band shaded.
pub fn rdc_chart(
    rdc: &Rdc,
    title: &str,
    log_scale: bool,
    modes: &[Mode],
    band: Option<&ThresholdBand>,
) -> String {
    let heights = if log_scale { log_view(rdc) } else { rdc.frequencies() };
    let top = heights.iter().cloned().fold(0.0, f64::max);
    let top = if top > 0.0 { top * 1.05 } else { 1.0 };
    let f = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: top,
    };
    let mut out = String::new();
    open(&mut out, title);
    if let Some(b) = band {
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="green" fill-opacity="0.15"/>"#,
            f.px(b.lower),
            f.py(top),
            f.px(b.upper) - f.px(b.lower),
            f.py(0.0) - f.py(top)
        );
    }
    let edges = rdc.edges();
    for (i, h) in heights.iter().enumerate() {
        if *h <= 0.0 {
            continue;
        }
        let (x, x2) = (f.px(edges[i]), f.px(edges[i + 1]));
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue"/>"#,
            f.py(*h),
            (x2 - x - 0.5).max(0.5),
            f.py(0.0) - f.py(*h)
        );
    }
    for m in modes {
        let x = f.px(m.location);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="crimson" stroke-dasharray="4 3"/>"#,
            f.py(0.0),
            f.py(top)
        );
    }
    let y_label = if log_scale { "ln(1 + count)" } else { "frequency" };
    axes(&mut out, &f, "score", y_label, &ticks(0.0, 1.0, 4), &ticks(0.0, top, 4));
    out.push_str("</svg>\n");
    out
}

/// Upper bound of impacted traffic against new-model accuracy.
pub fn curve_chart(points: &[CurvePoint], baseline: f64) -> String {
    let (x0, x1) = match (points.first(), points.last()) {
        (Some(a), Some(b)) if b.accuracy > a.accuracy => (a.accuracy, b.accuracy),
        (Some(a), _) => (a.accuracy - 0.05, a.accuracy + 0.05),
        _ => (0.0, 1.0),
    };
    let f = Frame {
        x0,
        x1,
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    open(&mut out, &format!("Impacted traffic upper bound, baseline accuracy {baseline}"));
    let pts: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", f.px(p.accuracy), f.py(p.upper_bound)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        pts.join(" ")
    );
    axes(
        &mut out,
        &f,
        "new model accuracy",
        "max share of traffic in experiment",
        &ticks(x0, x1, 4),
        &ticks(0.0, 1.0, 4),
    );
    out.push_str("</svg>\n");
    out
}
