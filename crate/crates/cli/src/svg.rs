//! Minimal static SVG charts for evaluation reports.

use lyralign::metrics::{Histogram, TriageRow};
use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 48.0;

fn frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    s
}

fn tick(s: &mut String, x: f64, y: f64, label: &str, anchor: &str) {
    let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{label}</text>"#);
}

/// Bar chart of deviation counts over `[-range, range]`.
pub fn histogram(h: &Histogram) -> String {
    let mut s = frame("Onset deviation", "predicted - reference (s)", "words");
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar_w = plot_w / h.counts.len().max(1) as f64;
    for (i, &c) in h.counts.iter().enumerate() {
        let bh = plot_h * c as f64 / max;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78b5"/>"##,
            MARGIN + i as f64 * bar_w,
            H - MARGIN - bh,
            bar_w.max(0.5),
            bh
        );
    }
    for (frac, v) in [(0.0, -h.range), (0.5, 0.0), (1.0, h.range)] {
        tick(&mut s, MARGIN + frac * plot_w, H - MARGIN + 16.0, &format!("{v}"), "middle");
    }
    tick(&mut s, MARGIN - 4.0, MARGIN + 4.0, &format!("{}", max as usize), "end");
    if h.underflow + h.overflow > 0 {
        tick(
            &mut s,
            W - MARGIN,
            MARGIN - 8.0,
            &format!("outside range: {} below, {} above", h.underflow, h.overflow),
            "end",
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Precision, recall and F1 against the confidence threshold.
pub fn triage_curves(rows: &[TriageRow]) -> String {
    let mut s = frame("Triage by confidence threshold", "confidence threshold", "score");
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let x_max = rows.iter().map(|r| r.threshold).fold(0.0f64, f64::max).max(1e-9);
    let x = |t: f64| MARGIN + plot_w * t / x_max;
    let y = |v: f64| H - MARGIN - plot_h * v;
    let series: [(&str, &str, fn(&TriageRow) -> Option<f64>); 3] = [
        ("precision", "#4a78b5", |r| r.precision),
        ("recall", "#d9822b", |r| r.recall),
        ("F1", "#2f9e44", |r| r.f1),
    ];
    for (k, (name, color, get)) in series.iter().enumerate() {
        let pts: Vec<String> = rows
            .iter()
            .filter_map(|r| get(r).map(|v| format!("{:.2},{:.2}", x(r.threshold), y(v))))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            W - MARGIN - 90.0,
            W - MARGIN - 70.0
        );
        tick(&mut s, W - MARGIN - 64.0, ly + 4.0, name, "start");
    }
    for v in [0.0, 0.5, 1.0] {
        tick(&mut s, MARGIN - 4.0, y(v) + 4.0, &format!("{v}"), "end");
    }
    for t in [0.0, x_max / 2.0, x_max] {
        tick(&mut s, x(t), H - MARGIN + 16.0, &format!("{t:.2}"), "middle");
    }
    s.push_str("</svg>\n");
    s
}
