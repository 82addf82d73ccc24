//! Deterministic SVG rendering: mission trajectories and sweep line charts.
//!
//! Everything is emitted with fixed-precision formatting so identical
//! inputs produce identical bytes.

use std::fmt::Write;

use crate::harness::csvio::TrajectoryLog;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Two-panel figure: top-down view (x right, y up) and an altitude profile
/// over slots. Buildings are gray boxes, users red dots numbered in
/// schedule order, the flight path a blue polyline, completion a green
/// marker.
pub fn render_trajectory_svg(traj: &TrajectoryLog) -> String {
    let pad = 40.0;
    let panel = 420.0;
    let total_w = pad * 3.0 + panel * 2.0;
    let total_h = pad * 2.0 + panel;
    let side = traj.env.side_xy;
    let sx = |x: f64| pad + x / side * panel;
    // SVG y grows downward; mission y grows upward.
    let sy = |y: f64| pad + panel - y / side * panel;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        fmt(total_w),
        fmt(total_h),
        fmt(total_w),
        fmt(total_h)
    );
    let _ = write!(
        svg,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        fmt(pad),
        fmt(pad),
        fmt(panel),
        fmt(panel)
    );
    for b in &traj.env.buildings {
        let _ = write!(
            svg,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#b0b0b0" stroke="#707070"/>"##,
            fmt(sx(b.x_min)),
            fmt(sy(b.y_max)),
            fmt((b.x_max - b.x_min) / side * panel),
            fmt((b.y_max - b.y_min) / side * panel),
        );
    }
    // Users numbered by schedule order (1 = first to serve).
    for (rank, &uid) in traj.schedule.iter().enumerate() {
        if let Some(user) = traj.env.users.iter().find(|u| u.id == uid) {
            let x = sx(user.position.x);
            let y = sy(user.position.y);
            let _ = write!(
                svg,
                r##"<circle cx="{}" cy="{}" r="5" fill="#d03030"/><text x="{}" y="{}" font-size="13" fill="#d03030">{}</text>"##,
                fmt(x),
                fmt(y),
                fmt(x + 7.0),
                fmt(y - 5.0),
                rank + 1
            );
        }
    }
    // Flight path.
    if !traj.slots.is_empty() {
        let mut points = String::new();
        let _ = write!(points, "{},{}", fmt(sx(traj.start[0])), fmt(sy(traj.start[1])));
        for s in &traj.slots {
            let _ = write!(points, " {},{}", fmt(sx(s.position.x)), fmt(sy(s.position.y)));
        }
        let _ = write!(
            svg,
            r##"<polyline points="{points}" fill="none" stroke="#2050d0" stroke-width="1.5"/>"##
        );
        if traj.t_f.is_some() {
            let last = traj.slots.last().unwrap();
            let _ = write!(
                svg,
                r##"<circle cx="{}" cy="{}" r="6" fill="none" stroke="#20a040" stroke-width="2"/>"##,
                fmt(sx(last.position.x)),
                fmt(sy(last.position.y))
            );
        }
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-size="14">top view (m)</text>"#,
        fmt(pad),
        fmt(pad - 8.0)
    );

    // Altitude profile panel.
    let x0 = pad * 2.0 + panel;
    let _ = write!(
        svg,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        fmt(x0),
        fmt(pad),
        fmt(panel),
        fmt(panel)
    );
    let slots_max = traj.slots.len().max(1) as f64;
    let alt_max = traj.max_flight_alt.max(1.0);
    let px = |t: f64| x0 + t / slots_max * panel;
    let py = |z: f64| pad + panel - z / alt_max * panel;
    if !traj.slots.is_empty() {
        let mut points = String::new();
        let _ = write!(points, "{},{}", fmt(px(0.0)), fmt(py(traj.start[2])));
        for (i, s) in traj.slots.iter().enumerate() {
            let _ = write!(points, " {},{}", fmt(px((i + 1) as f64)), fmt(py(s.position.z)));
        }
        let _ = write!(
            svg,
            r##"<polyline points="{points}" fill="none" stroke="#2050d0" stroke-width="1.5"/>"##
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-size="14">altitude profile (slot, m)</text>"#,
        fmt(x0),
        fmt(pad - 8.0)
    );
    svg.push_str("</svg>");
    svg
}

/// One polyline in a chart.
#[derive(Debug, Clone)]
pub struct ChartSeries {
    pub label: String,
    /// (x, y) points, already sorted by x.
    pub points: Vec<(f64, f64)>,
}

const SERIES_COLORS: [&str; 6] = [
    "#2050d0", "#d03030", "#20a040", "#d0a020", "#8030c0", "#108090",
];

/// Minimal line chart with axes, tick labels, and a legend.
pub fn render_line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[ChartSeries],
) -> String {
    let pad = 60.0;
    let w = 560.0;
    let h = 400.0;
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x_min, x_max) = bounds(all.iter().map(|p| p.0));
    let (y_min, y_max) = bounds(all.iter().map(|p| p.1));
    let x_span = (x_max - x_min).max(1e-9);
    let y_span = (y_max - y_min).max(1e-9);
    let sx = |x: f64| pad + (x - x_min) / x_span * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y_min) / y_span * (h - 2.0 * pad);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="22" font-size="15">{}</text>"#,
        fmt(pad),
        title
    );
    let _ = write!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        fmt(pad),
        fmt(h - pad),
        fmt(w - pad),
        fmt(h - pad),
        fmt(pad),
        fmt(pad),
        fmt(pad),
        fmt(h - pad),
    );
    // Tick labels at the extremes.
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-size="11">{}</text><text x="{}" y="{}" font-size="11">{}</text>"#,
        fmt(pad),
        fmt(h - pad + 16.0),
        fmt(x_min),
        fmt(w - pad - 20.0),
        fmt(h - pad + 16.0),
        fmt(x_max),
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-size="11">{}</text><text x="{}" y="{}" font-size="11">{}</text>"#,
        fmt(8.0),
        fmt(h - pad),
        fmt(y_min),
        fmt(8.0),
        fmt(pad + 6.0),
        fmt(y_max),
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-size="12">{}</text>"#,
        fmt(w / 2.0 - 30.0),
        fmt(h - 12.0),
        x_label
    );
    let _ = write!(
        svg,
        r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})">{}</text>"#,
        fmt(h / 2.0),
        fmt(h / 2.0),
        y_label
    );
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let mut points = String::new();
        for (j, (x, y)) in s.points.iter().enumerate() {
            if j > 0 {
                points.push(' ');
            }
            let _ = write!(points, "{},{}", fmt(sx(*x)), fmt(sy(*y)));
        }
        let _ = write!(
            svg,
            r#"<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>"#
        );
        for (x, y) in &s.points {
            let _ = write!(
                svg,
                r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                fmt(sx(*x)),
                fmt(sy(*y))
            );
        }
        let ly = pad + 16.0 * i as f64;
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            fmt(w - pad - 90.0),
            fmt(ly),
            fmt(w - pad - 70.0),
            fmt(ly),
            fmt(w - pad - 64.0),
            fmt(ly + 4.0),
            s.label
        );
    }
    svg.push_str("</svg>");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}
