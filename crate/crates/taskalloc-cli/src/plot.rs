//! Log-scale MSE-vs-iteration SVG, one polyline per trace.

use std::fmt::Write as _;

use crate::trace::TraceRecord;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series<'a> {
    pub label: String,
    pub rows: &'a [TraceRecord],
}

/// First iteration whose MSE is at or below `eps`.
pub fn first_below(rows: &[TraceRecord], eps: f64) -> Option<usize> {
    rows.iter().find(|r| r.mse <= eps).map(|r| r.iter)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn x_step(max_iter: usize) -> usize {
    let raw = (max_iter.max(1) as f64 / 5.0).max(1.0);
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    step as usize
}

pub fn render_svg(series: &[Series], epsilon: Option<f64>) -> String {
    let positive = series.iter().flat_map(|s| s.rows.iter()).map(|r| r.mse).filter(|&m| m > 0.0 && m.is_finite());
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| (a.min(m), b.max(m)));
    let (mut lo, mut hi) = if lo.is_finite() { (lo, hi) } else { (1e-6, 1.0) };
    if let Some(e) = epsilon.filter(|e| *e > 0.0) {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    let d_lo = lo.log10().floor() as i32;
    let d_hi = (hi.log10().ceil() as i32).max(d_lo + 1);
    let max_iter = series.iter().flat_map(|s| s.rows.iter()).map(|r| r.iter).max().unwrap_or(1).max(1);
    let step = x_step(max_iter);
    let x_max = max_iter.div_ceil(step) * step;

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |it: usize| LEFT + pw * it as f64 / x_max as f64;
    let sy = |m: f64| TOP + ph * (d_hi as f64 - m.log10()) / (d_hi - d_lo) as f64;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    for d in d_lo..=d_hi {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let mut it = 0;
    while it <= x_max {
        let x = sx(it);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#eeeeee"/>"##,
            TOP + ph
        );
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{it}</text>"#, TOP + ph + 18.0);
        it += step;
    }
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">MSE</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    if let Some(e) = epsilon.filter(|e| *e > 0.0) {
        let y = sy(e);
        let _ = writeln!(
            out,
            r#"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="6 4"/>"#,
            LEFT + pw
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">ε = {e:e}</text>"#, LEFT + pw + 8.0, y + 4.0);
    }
    for (j, s) in series.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        let mut pts = String::new();
        for r in s.rows.iter().filter(|r| r.mse > 0.0 && r.mse.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", sx(r.iter), sy(r.mse));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        );
        let ly = TOP + 20.0 + 20.0 * j as f64;
        let lx = LEFT + pw + 8.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(rate: f64) -> Vec<TraceRecord> {
        (1..=300)
            .map(|i| TraceRecord {
                iter: i,
                mse: rate.powi(i as i32),
                objective: 1.0,
                power_residual: 0.0,
                coupling_residual: 0.0,
                active_users: 2,
                theta: None,
            })
            .collect()
    }

    #[test]
    fn deterministic_with_labels() {
        let (a, b) = (rows(0.95), rows(0.9));
        let series = [Series { label: "parallel".into(), rows: &a }, Series { label: "accelerated".into(), rows: &b }];
        let svg = render_svg(&series, Some(1e-4));
        assert_eq!(svg, render_svg(&series, Some(1e-4)));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">iteration<") && svg.contains(">MSE<"));
        assert!(svg.contains("parallel") && svg.contains("accelerated"));
        assert!(first_below(&b, 1e-4) < first_below(&a, 1e-4));
    }

    #[test]
    fn single_series() {
        let a = rows(0.5);
        let svg = render_svg(&[Series { label: "a<b".into(), rows: &a }], None);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("a&lt;b"));
    }
}
