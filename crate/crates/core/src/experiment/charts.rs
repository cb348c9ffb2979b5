//! SVG charts rendered from a [`ComparisonReport`] alone.
//!
//! Output is plain text with fixed number formatting, so rendering the same
//! report twice (or a report parsed back from its JSON) gives identical
//! bytes.

use std::fmt::Write as _;

use super::ComparisonReport;

pub const ERRORS_SVG: &str = "errors.svg";
pub const OVERPROVISIONING_SVG: &str = "overprovisioning.svg";
pub const RADAR_SVG: &str = "radar.svg";
pub const EFFICIENCY_BOX_SVG: &str = "efficiency_box.svg";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Coordinates with two decimals.
fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Axis and value labels in compact scientific or fixed form.
fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        px(WIDTH / 2.0),
        escape(title)
    );
    s
}

fn close(mut s: String) -> String {
    s.push_str("</svg>\n");
    s
}

/// Y axis from 0 to `max` with five gridlines; returns the value-to-y map.
fn y_axis(s: &mut String, max: f64) -> impl Fn(f64) -> f64 {
    let top = if max > 0.0 && max.is_finite() { max } else { 1.0 };
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = move |v: f64| HEIGHT - BOTTOM - v / top * plot_h;
    for k in 0..=5 {
        let v = top * k as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#dddddd"/>"##,
            px(LEFT),
            px(yy),
            px(WIDTH - RIGHT),
            px(yy)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            px(LEFT - 6.0),
            px(yy + 4.0),
            label(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#,
        l = px(LEFT),
        t = px(TOP),
        b = px(HEIGHT - BOTTOM)
    );
    y
}

fn bar(s: &mut String, x: f64, w: f64, y_top: f64, fill: &str, value: f64) {
    let base = HEIGHT - BOTTOM;
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"><title>{}</title></rect>"#,
        px(x),
        px(y_top),
        px(w),
        px((base - y_top).max(0.0)),
        label(value)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
        px(x + w / 2.0),
        px(y_top - 4.0),
        label(value)
    );
}

fn category_label(s: &mut String, x: f64, text: &str) {
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        px(x),
        px(HEIGHT - BOTTOM + 18.0),
        escape(text)
    );
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    for (i, (name, fill)) in entries.iter().enumerate() {
        let x = LEFT + 10.0 + 150.0 * i as f64;
        let y = HEIGHT - 22.0;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="12" height="12" fill="{fill}"/>"#, px(x), px(y - 10.0));
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, px(x + 16.0), px(y), escape(name));
    }
}

/// Grouped MAE and RMSE bars per policy.
pub fn errors_chart(report: &ComparisonReport) -> String {
    let mut s = open("Forecast error (MAE, RMSE)");
    let max = report
        .policies
        .iter()
        .flat_map(|p| [p.metrics.mae, p.metrics.rmse])
        .fold(0.0, f64::max);
    let y = y_axis(&mut s, max * 1.1);
    let n = report.policies.len().max(1) as f64;
    let slot = (WIDTH - LEFT - RIGHT) / n;
    let w = slot * 0.3;
    for (i, p) in report.policies.iter().enumerate() {
        let x0 = LEFT + slot * i as f64 + slot * 0.2;
        bar(&mut s, x0, w, y(p.metrics.mae), color(0), p.metrics.mae);
        bar(&mut s, x0 + w, w, y(p.metrics.rmse), color(1), p.metrics.rmse);
        category_label(&mut s, LEFT + slot * (i as f64 + 0.5), &p.name);
    }
    legend(&mut s, &[("MAE", color(0)), ("RMSE", color(1))]);
    close(s)
}

/// Mean over-provisioning per policy.
pub fn overprovisioning_chart(report: &ComparisonReport) -> String {
    let mut s = open("Mean over-provisioning");
    let max = report
        .policies
        .iter()
        .map(|p| p.metrics.mean_over_provisioning)
        .fold(0.0, f64::max);
    let y = y_axis(&mut s, max * 1.1);
    let n = report.policies.len().max(1) as f64;
    let slot = (WIDTH - LEFT - RIGHT) / n;
    for (i, p) in report.policies.iter().enumerate() {
        let v = p.metrics.mean_over_provisioning;
        bar(&mut s, LEFT + slot * i as f64 + slot * 0.25, slot * 0.5, y(v), color(i), v);
        category_label(&mut s, LEFT + slot * (i as f64 + 0.5), &p.name);
    }
    close(s)
}

/// Normalized scores on one spoke per metric, one polygon per policy.
pub fn radar_chart(report: &ComparisonReport) -> String {
    let mut s = open("Normalized comparison (1 = best)");
    let (cx, cy) = (WIDTH / 2.0, (HEIGHT + TOP - BOTTOM) / 2.0 + 10.0);
    let radius = 120.0;
    let axes: Vec<&str> = report
        .radar
        .first()
        .map(|r| r.scores.iter().map(|(a, _)| a.as_str()).collect())
        .unwrap_or_default();
    let k = axes.len().max(1) as f64;
    let point = |i: usize, r: f64| {
        let angle = -std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * i as f64 / k;
        (cx + r * angle.cos(), cy + r * angle.sin())
    };
    for ring in 1..=4 {
        let r = radius * ring as f64 / 4.0;
        let pts: Vec<String> = (0..axes.len())
            .map(|i| {
                let (x, y) = point(i, r);
                format!("{},{}", px(x), px(y))
            })
            .collect();
        let _ = writeln!(s, r##"<polygon points="{}" fill="none" stroke="#dddddd"/>"##, pts.join(" "));
    }
    for (i, axis) in axes.iter().enumerate() {
        let (x, y) = point(i, radius);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999999"/>"##,
            px(cx),
            px(cy),
            px(x),
            px(y)
        );
        let (lx, ly) = point(i, radius + 18.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            px(lx),
            px(ly + 4.0),
            escape(axis)
        );
    }
    let mut entries = Vec::new();
    for (p, scores) in report.radar.iter().enumerate() {
        let pts: Vec<String> = scores
            .scores
            .iter()
            .enumerate()
            .map(|(i, (_, v))| {
                let (x, y) = point(i, radius * v.clamp(0.0, 1.0));
                format!("{},{}", px(x), px(y))
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{c}" fill-opacity="0.15" stroke="{c}" stroke-width="2"/>"#,
            pts.join(" "),
            c = color(p)
        );
        entries.push((scores.policy.as_str(), color(p)));
    }
    legend(&mut s, &entries);
    close(s)
}

/// Per-timestep efficiency: whiskers at min and max, box at the quartiles,
/// line at the median.
pub fn efficiency_box_chart(report: &ComparisonReport) -> String {
    let mut s = open("Per-timestep efficiency distribution");
    let y = y_axis(&mut s, 1.0);
    let n = report.policies.len().max(1) as f64;
    let slot = (WIDTH - LEFT - RIGHT) / n;
    for (i, p) in report.policies.iter().enumerate() {
        let m = &p.metrics;
        let mid = LEFT + slot * (i as f64 + 0.5);
        let half = slot * 0.2;
        let (lo, hi) = m.efficiency_range;
        let (q1, q3) = m.efficiency_quartiles;
        let c = color(i);
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{c}"/>"#,
            px(y(hi)),
            px(y(lo)),
            x = px(mid)
        );
        for v in [lo, hi] {
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{yy}" x2="{}" y2="{yy}" stroke="{c}"/>"#,
                px(mid - half / 2.0),
                px(mid + half / 2.0),
                yy = px(y(v))
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{c}" fill-opacity="0.3" stroke="{c}"/>"#,
            px(mid - half),
            px(y(q3)),
            px(2.0 * half),
            px((y(q1) - y(q3)).max(0.0))
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{yy}" x2="{}" y2="{yy}" stroke="black" stroke-width="2"><title>median {}</title></line>"#,
            px(mid - half),
            px(mid + half),
            label(m.efficiency_median),
            yy = px(y(m.efficiency_median))
        );
        category_label(&mut s, mid, &p.name);
    }
    close(s)
}

/// All four charts paired with their file names.
pub fn render_all(report: &ComparisonReport) -> Vec<(&'static str, String)> {
    vec![
        (ERRORS_SVG, errors_chart(report)),
        (OVERPROVISIONING_SVG, overprovisioning_chart(report)),
        (RADAR_SVG, radar_chart(report)),
        (EFFICIENCY_BOX_SVG, efficiency_box_chart(report)),
    ]
}
