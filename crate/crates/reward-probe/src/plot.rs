//! Pr{Proper Action} against epoch as a small hand-written SVG.
//!
//! Output depends only on the records, and coordinates are printed with a
//! fixed number of decimals, so the same CSV always yields the same bytes.

use std::fmt::Write;

use reward_probe_core::trainer::MetricsRecord;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// A 1-2-5 step giving at most about `target` ticks over `span`.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = (span / target).max(1.0);
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `None` when there are no records.
pub fn render_svg(records: &[MetricsRecord], title: &str) -> Option<String> {
    let first = records.first()?.epoch as f64;
    let last = records.last()?.epoch as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    // A single epoch still gets a unit-wide axis.
    let (x0, x1) = if last > first { (first, last) } else { (first - 0.5, first + 0.5) };
    let sx = |e: f64| LEFT + (e - x0) / (x1 - x0) * plot_w;
    let sy = |p: f64| TOP + (1.0 - p.clamp(0.0, 1.0)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // Horizontal grid and y ticks.
    for i in 0..=5 {
        let p = i as f64 / 5.0;
        let y = sy(p);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.1}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{p:.1}</text>"#,
            LEFT - 8.0,
            y + 4.0
        );
    }

    // X ticks on whole epochs.
    let step = tick_step(x1 - x0, 8.0);
    let mut e = (x0 / step).ceil() * step;
    while e <= x1 + 1e-9 {
        let x = sx(e);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.1}" x2="{x:.2}" y2="{:.1}" stroke="#444444"/>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            e.round() as i64
        );
        e += step;
    }

    let _ = writeln!(
        s,
        r##"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#444444"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">epoch</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">Pr{{Proper Action}}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    if records.len() == 1 {
        let r = &records[0];
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f5fa8"/>"##,
            sx(r.epoch as f64),
            sy(r.pr_proper_action)
        );
    } else {
        let points: Vec<String> = records
            .iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.epoch as f64), sy(r.pr_proper_action)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>"##,
            points.join(" ")
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}
