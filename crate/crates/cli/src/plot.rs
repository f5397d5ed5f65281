//! Minimal SVG line charts and heatmaps. Output depends only on the data,
//! so repeated runs write identical files.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

pub struct Line<'a> {
    pub name: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Roughly five round tick positions covering [lo, hi].
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(out, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        for t in ticks(self.x.0, self.x.1) {
            let p = self.px(t);
            let _ = writeln!(
                out,
                r#"<line x1="{p:.2}" y1="{y1}" x2="{p:.2}" y2="{}" stroke="black"/><text x="{p:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
                y1 + 5.0,
                y1 + 18.0,
                label(t)
            );
        }
        for t in ticks(self.y.0, self.y.1) {
            let p = self.py(t);
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{p:.2}" x2="{x0}" y2="{p:.2}" stroke="black"/><text x="{}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                p + 4.0,
                label(t)
            );
        }
        let _ = writeln!(out, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, escape(title));
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(x_label));
        let _ = writeln!(
            out,
            r#"<text x="16" y="{0:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }
}

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    )
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, lines: &[Line]) -> String {
    let frame = Frame {
        x: range(lines.iter().flat_map(|l| l.x.iter().copied())),
        y: range(lines.iter().flat_map(|l| l.y.iter().copied())),
    };
    let mut out = header();
    frame.axes(&mut out, title, x_label, y_label);
    for (k, l) in lines.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for (x, y) in l.x.iter().zip(l.y) {
            if !(x.is_finite() && y.is_finite()) {
                pen_down = false;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, frame.px(*x), frame.py(*y));
            pen_down = true;
        }
        let dash = if l.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, d.trim_end());
        let ly = TOP + 10.0 + 16.0 * k as f64;
        let lx = W - RIGHT + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{}" y="{}" font-size="11">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(l.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Piecewise-linear blue-white-red map on t ∈ [0, 1].
fn color(t: f64) -> String {
    let stops = [(0.0, [49.0, 54.0, 149.0]), (0.5, [247.0, 247.0, 247.0]), (1.0, [165.0, 0.0, 38.0])];
    let t = t.clamp(0.0, 1.0);
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let s = (t - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] + (b.1[i] - a.1[i]) * s).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Cell-centred heatmap of z[i][j] over (x[i], y[j]); NaN cells are grey.
/// `overlay` points are drawn as black markers.
pub fn heatmap(title: &str, x_label: &str, y_label: &str, x: &[f64], y: &[f64], z: &[Vec<f64>], overlay: &[(f64, f64)]) -> String {
    let edges = |v: &[f64]| -> Vec<f64> {
        if v.len() == 1 {
            return vec![v[0] - 0.5, v[0] + 0.5];
        }
        let mut e = vec![v[0] - (v[1] - v[0]) / 2.0];
        e.extend(v.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        e.push(v[v.len() - 1] + (v[v.len() - 1] - v[v.len() - 2]) / 2.0);
        e
    };
    let (xe, ye) = (edges(x), edges(y));
    let frame = Frame { x: range(xe.iter().copied()), y: range(ye.iter().copied()) };
    let (zlo, zhi) = range(z.iter().flatten().copied());
    let mut out = header();
    for (i, row) in z.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let fill = if v.is_finite() { color((v - zlo) / (zhi - zlo)) } else { "#bbbbbb".into() };
            let (px0, px1) = (frame.px(xe[i]), frame.px(xe[i + 1]));
            let (py0, py1) = (frame.py(ye[j + 1]), frame.py(ye[j]));
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="{fill}" stroke-width="0.3"/>"#,
                px0.min(px1),
                py0.min(py1),
                (px1 - px0).abs(),
                (py1 - py0).abs()
            );
        }
    }
    for &(a, b) in overlay {
        if a >= frame.x.0 && a <= frame.x.1 && b >= frame.y.0 && b <= frame.y.1 {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="black"/>"#, frame.px(a), frame.py(b));
        }
    }
    frame.axes(&mut out, title, x_label, y_label);
    let (bx, by, bh) = (W - RIGHT + 20.0, TOP, H - TOP - BOTTOM);
    for k in 0..50 {
        let t = k as f64 / 49.0;
        let _ = writeln!(
            out,
            r#"<rect x="{bx}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            by + bh * (1.0 - t) - bh / 50.0,
            bh / 50.0 + 0.5,
            color(t)
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, bx + 20.0, by + 10.0, label(zhi));
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, bx + 20.0, by + bh, label(zlo));
    out.push_str("</svg>\n");
    out
}
