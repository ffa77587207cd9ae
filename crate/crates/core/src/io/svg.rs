//! Minimal SVG line plots. Best effort for human inspection; the CSV and
//! JSON outputs are the deterministic contract.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;

/// Write a single-series line plot.
pub fn line_plot(path: &Path, title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::domain("plot needs at least two points"));
    }
    let finite = |v: &&f64| v.is_finite();
    let x_min = xs.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_min = ys.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max);
    let x_span = (x_max - x_min).max(f64::MIN_POSITIVE);
    let y_span = (y_max - y_min).max(f64::MIN_POSITIVE);

    let to_px = |x: f64, y: f64| {
        let px = MARGIN + (x - x_min) / x_span * (WIDTH - 2.0 * MARGIN);
        let py = HEIGHT - MARGIN - (y - y_min) / y_span * (HEIGHT - 2.0 * MARGIN);
        (px, py)
    };

    let mut d = String::new();
    let mut pen_down = false;
    for (&x, &y) in xs.iter().zip(ys) {
        if !x.is_finite() || !y.is_finite() {
            pen_down = false;
            continue;
        }
        let (px, py) = to_px(x, y);
        let _ = write!(d, "{}{px:.2},{py:.2} ", if pen_down { "L" } else { "M" });
        pen_down = true;
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#,
        WIDTH / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (v, label) in [(x_min, true), (x_max, true), (y_min, false), (y_max, false)] {
        let (px, py) = if label {
            (to_px(v, y_min).0, HEIGHT - MARGIN + 18.0)
        } else {
            (MARGIN - 6.0, to_px(x_min, v).1)
        };
        let anchor = if label { "middle" } else { "end" };
        let _ = writeln!(
            svg,
            r#"<text x="{px:.1}" y="{py:.1}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{v:.3e}</text>"#
        );
    }
    let _ = writeln!(
        svg,
        r#"<path d="{}" fill="none" stroke="#1f6fb2" stroke-width="1.2"/>"#,
        d.trim_end()
    );
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
