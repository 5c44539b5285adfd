//! Quadrant scatter as a minimal, byte-deterministic SVG.
//!
//! Both axes grow toward the origin in the bottom-left corner: pools with
//! competitive LPs sit left, toxic flow sits low.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_X: f64 = WIDTH * 0.05;
const MARGIN_Y: f64 = HEIGHT * 0.05;
const RADIUS: f64 = 3.0;

pub struct Point<'a> {
    pub label: &'a str,
    pub cm_agg: f64,
    pub toxicity: f64,
}

/// Data range padded by 5% each side, always containing zero.
fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render(points: &[Point<'_>]) -> String {
    let (x0, x1) = (MARGIN_X, WIDTH - MARGIN_X);
    let (y0, y1) = (MARGIN_Y, HEIGHT - MARGIN_Y);
    let (cm_lo, cm_hi) = axis_range(points.iter().map(|p| p.cm_agg));
    let (tox_lo, tox_hi) = axis_range(points.iter().map(|p| p.toxicity));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    s.push_str(concat!(
        r#"<defs><marker id="head" markerWidth="10" markerHeight="8" refX="9" refY="4" orient="auto">"#,
        r#"<path d="M0,0 L10,4 L0,8 z" fill="black"/></marker></defs>"#,
        "\n"
    ));
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="lightgray"/>"#,
        x1 - x0,
        y1 - y0
    );
    // Arrows run from the far end of each axis into the origin.
    let _ = writeln!(
        s,
        r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black" stroke-width="2" marker-end="url(#head)"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black" stroke-width="2" marker-end="url(#head)"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">LP competitiveness CM_agg ↑</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 8.0
    );
    let (tx, ty) = (MARGIN_X - 14.0, (y0 + y1) / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="{tx:.2}" y="{ty:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 {tx:.2} {ty:.2})">toxicity ↑</text>"#
    );
    for p in points {
        let cx = x1 - (p.cm_agg - cm_lo) / (cm_hi - cm_lo) * (x1 - x0);
        let cy = y0 + (p.toxicity - tox_lo) / (tox_hi - tox_lo) * (y1 - y0);
        let label = escape(p.label);
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{RADIUS}" fill="steelblue"><title>{label}</title></circle>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">{label}</text>"#,
            cx + 5.0,
            cy - 5.0
        );
    }
    s.push_str("</svg>\n");
    s
}
