//! Minimal SVG emission for the diagnostic figures: layer curves, decay
//! curves, group-size bars, and the co-activation heatmap. No plotting
//! dependency; output is deterministic for byte-compare tests.

use std::fmt::Write;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: Vec<f64>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 48.0;

fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi <= lo {
        return out_lo;
    }
    out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
}

fn svg_open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\
<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\
<text x=\"{}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{title}</text>",
        W / 2.0
    );
}

/// Line chart over per-layer (or per-bin) values; NaN points are skipped.
pub fn line_chart(title: &str, x_label: &str, series: &[Series], baseline: Option<f64>) -> String {
    let mut out = String::new();
    svg_open(&mut out, title);
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let finite: Vec<f64> = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .chain(baseline)
        .filter(|v| v.is_finite())
        .collect();
    let hi = finite.iter().copied().fold(0.0f64, f64::max).max(1e-9) * 1.05;
    for (si, s) in series.iter().enumerate() {
        let mut path = String::new();
        let mut pen_down = false;
        for (i, &v) in s.values.iter().enumerate() {
            if !v.is_finite() {
                pen_down = false;
                continue;
            }
            let x = scale(i as f64, 0.0, (n.max(2) - 1) as f64, MARGIN, W - MARGIN);
            let y = scale(v, 0.0, hi, H - MARGIN, MARGIN);
            let _ = write!(path, "{}{x:.1},{y:.1} ", if pen_down { "L" } else { "M" });
            pen_down = true;
        }
        let _ = write!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\
<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\">{}</text>",
            path.trim_end(),
            s.color,
            W - MARGIN + 4.0,
            MARGIN + 14.0 * si as f64,
            s.color,
            s.label
        );
    }
    if let Some(b) = baseline {
        let y = scale(b, 0.0, hi, H - MARGIN, MARGIN);
        let _ = write!(
            out,
            "<line x1=\"{MARGIN}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
            W - MARGIN
        );
    }
    let _ = write!(
        out,
        "<line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\
<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>\
<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text></svg>",
        H - MARGIN,
        W - MARGIN,
        H - MARGIN,
        H - MARGIN,
        W / 2.0,
        H - 12.0
    );
    out
}

/// Descending bar chart of group sizes.
pub fn bar_chart(title: &str, values: &[usize]) -> String {
    let mut out = String::new();
    svg_open(&mut out, title);
    let hi = values.iter().copied().max().unwrap_or(1) as f64;
    let n = values.len().max(1) as f64;
    let band = (W - 2.0 * MARGIN) / n;
    for (i, &v) in values.iter().enumerate() {
        let h = scale(v as f64, 0.0, hi, 0.0, H - 2.0 * MARGIN);
        let x = MARGIN + i as f64 * band;
        let y = H - MARGIN - h;
        let _ = write!(
            out,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"steelblue\"/>",
            (band * 0.85).max(0.5)
        );
    }
    let _ = write!(
        out,
        "<line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/></svg>",
        H - MARGIN,
        W - MARGIN,
        H - MARGIN
    );
    out
}

/// Log-scale grayscale heatmap of a dense square count matrix, rows/columns
/// permuted by `order`.
pub fn heatmap(title: &str, n: usize, at: impl Fn(usize, usize) -> u64, order: &[u16]) -> String {
    let mut out = String::new();
    svg_open(&mut out, title);
    let side = (W.min(H) - 2.0 * MARGIN) / n.max(1) as f64;
    let max_count = {
        let mut m = 0u64;
        for i in 0..n {
            for j in 0..n {
                m = m.max(at(i, j));
            }
        }
        (m as f64).max(1.0)
    };
    let log_hi = max_count.ln_1p();
    for (ri, &i) in order.iter().enumerate() {
        for (rj, &j) in order.iter().enumerate() {
            let c = at(i as usize, j as usize);
            if c == 0 {
                continue;
            }
            let lum = 255.0 - scale((c as f64).ln_1p(), 0.0, log_hi, 0.0, 255.0);
            let x = MARGIN + rj as f64 * side;
            let y = MARGIN + ri as f64 * side;
            let _ = write!(
                out,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{side:.2}\" height=\"{side:.2}\" fill=\"rgb({0},{0},{0})\"/>",
                lum as u8
            );
        }
    }
    out.push_str("</svg>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_valid_and_deterministic() {
        let series = [Series { label: "x", color: "blue", values: vec![0.1, 0.5, f64::NAN, 0.3] }];
        let a = line_chart("t", "layer", &series, Some(0.016));
        let b = line_chart("t", "layer", &series, Some(0.016));
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>"));
        let bars = bar_chart("g", &[5, 2, 1]);
        assert_eq!(bars.matches("<rect").count(), 4, "background + 3 bars");
        let hm = heatmap("h", 2, |i, j| (i + j) as u64, &[1, 0]);
        assert!(hm.contains("rect"));
    }
}
