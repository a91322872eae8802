use std::fmt::Write;

use super::Panel;

const W: f64 = 480.0;
const H: f64 = 300.0;
const PAD: f64 = 44.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Standalone SVG line chart of one figure panel.
pub fn line_chart_svg(panel: &Panel) -> String {
    let xs = panel.series.iter().flat_map(|s| s.x.iter().map(|&x| x as f64));
    let ys = panel.series.iter().flat_map(|s| s.y.iter().copied());
    let (x0, x1) = bounds(xs);
    let (mut y0, mut y1) = bounds(ys);
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| PAD + (x - x0) / (x1 - x0).max(1.0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(&panel.title));
    let _ = write!(
        svg,
        r#"<path d="M{PAD} {PAD}V{}H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for (y, anchor) in [(y0, H - PAD), (y1, PAD)] {
        let _ = write!(svg, r#"<text x="{}" y="{}" text-anchor="end">{:.2}</text>"#, PAD - 4.0, anchor + 4.0, y);
    }
    let _ = write!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - PAD, H - PAD + 16.0, x1);
    let _ = write!(svg, r#"<text x="{}" y="{}">episode</text>"#, W / 2.0 - 20.0, H - 8.0);
    for (i, s) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (k, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
            let _ = write!(d, "{}{:.1} {:.1}", if k == 0 { "M" } else { "L" }, px(x as f64), py(y));
        }
        let _ = write!(svg, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            PAD + 8.0,
            PAD + 14.0 * (i as f64 + 1.0),
            escape(&s.arm)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::{Phase, Series};

    #[test]
    fn one_path_per_series() {
        let panel = Panel {
            phase: Phase::Train,
            instructed: false,
            title: "maze/umaze <train>".into(),
            series: vec![
                Series { arm: "a".into(), x: vec![1, 2, 3], y: vec![0.0, 0.5, 1.0] },
                Series { arm: "b".into(), x: vec![1, 2, 3], y: vec![0.2, 0.2, 0.2] },
            ],
        };
        let svg = line_chart_svg(&panel);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("stroke-width").count(), 2);
        assert!(svg.contains("&lt;train&gt;"));
    }
}
