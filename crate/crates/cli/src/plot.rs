//! Self-contained SVG bar charts for sweep results.

use std::fmt::Write;

pub struct Bar {
    pub label: String,
    pub value: f64,
    pub err: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Accuracy bars in [0, 1] with 95% interval whiskers.
pub fn bar_chart(title: &str, x_label: &str, bars: &[Bar]) -> String {
    let (w, h) = (120.0 + 90.0 * bars.len() as f64, 360.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 60.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let y = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{y0}" y2="{y0}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
            w - right,
            left - 6.0,
            y(v) + 4.0,
            y0 = y(v)
        );
    }
    let slot = plot_w / bars.len().max(1) as f64;
    for (i, b) in bars.iter().enumerate() {
        let cx = left + slot * (i as f64 + 0.5);
        let bw = slot * 0.6;
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="{bw}" height="{}" fill="#4878a8"/>"##,
            cx - bw / 2.0,
            y(b.value),
            y(0.0) - y(b.value)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{cx}" x2="{cx}" y1="{}" y2="{}" stroke="#222"/>"##,
            y(b.value - b.err),
            y(b.value + b.err)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{}" text-anchor="middle">{}</text><text x="{cx}" y="{}" text-anchor="middle" font-size="10">{:.3}</text>"#,
            y(0.0) + 16.0,
            escape(&b.label),
            y(b.value + b.err) - 4.0,
            b.value
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        h - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {0})">accuracy</text>"#,
        top + plot_h / 2.0
    );
    s.push_str("</svg>\n");
    s
}
