//! Static SVG plots of reward-versus-queries curves.

use std::fmt::Write as _;

use crate::report::Aggregate;

const W: f64 = 560.0;
const H: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One line on the plot: mean with a standard-error band.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<&'a Aggregate>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the curves for one task; `oracle` draws a dashed reference line.
pub fn curve_svg(title: &str, series: &[Series<'_>], oracle: Option<f64>) -> String {
    let max_q = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.queries))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for s in series {
        for p in &s.points {
            if p.mean_r_eval.is_finite() {
                lo = lo.min(p.mean_r_eval - p.stderr_r_eval);
                hi = hi.max(p.mean_r_eval + p.stderr_r_eval);
            }
        }
    }
    if let Some(o) = oracle.filter(|o| o.is_finite()) {
        lo = lo.min(o);
        hi = hi.max(o);
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let x = |q: f64| LEFT + pw * q / max_q;
    let y = |r: f64| TOP + ph * (hi - r) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    // Axes and ticks.
    let _ = writeln!(
        out,
        r#"<path d="M{LEFT} {TOP} V{} H{}" stroke="black" fill="none"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for k in 0..=4 {
        let r = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{r:.2}</text>"#,
            LEFT - 6.0,
            y(r) + 4.0
        );
        let q = max_q * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{q:.0}</text>"#,
            x(q),
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">queries</text>"#,
        LEFT + pw / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">test reward</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    if let Some(o) = oracle.filter(|o| o.is_finite()) {
        let _ = writeln!(
            out,
            r#"<line x1="{LEFT}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
            LEFT + pw,
            y(o),
            y(o)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<&&Aggregate> = s.points.iter().filter(|p| p.mean_r_eval.is_finite()).collect();
        if pts.is_empty() {
            continue;
        }
        let mut band = String::new();
        for p in &pts {
            let _ = write!(band, "{:.2},{:.2} ", x(p.queries as f64), y(p.mean_r_eval + p.stderr_r_eval));
        }
        for p in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", x(p.queries as f64), y(p.mean_r_eval - p.stderr_r_eval));
        }
        let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.queries as f64), y(p.mean_r_eval)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            LEFT + 10.0,
            LEFT + 30.0,
            LEFT + 36.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}
