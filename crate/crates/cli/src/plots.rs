//! Minimal SVG rendering for `--plots`.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub enum Style {
    Line,
    Points,
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let m = 0.04 * (hi - lo);
    (lo - m, hi + m)
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12"><rect width="100%" height="100%" fill="white"/><text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, x: (f64, f64), y: (f64, f64), xl: &str, yl: &str) {
    let _ = write!(
        out,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (vx, vy) = (x.0 + f * (x.1 - x.0), y.0 + f * (y.1 - y.0));
        let px = PAD + f * (W - 2.0 * PAD);
        let py = H - PAD - f * (H - 2.0 * PAD);
        let _ = write!(
            out,
            r#"<text x="{px}" y="{}" text-anchor="middle">{}</text><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            H - PAD + 16.0,
            fmt_tick(vx),
            PAD - 4.0,
            py + 4.0,
            fmt_tick(vy)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(xl),
        H / 2.0,
        H / 2.0,
        escape(yl)
    );
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

pub fn chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let x = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let y = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |v: f64| PAD + (v - x.0) / (x.1 - x.0) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - y.0) / (y.1 - y.0) * (H - 2.0 * PAD);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x, y, x_label, y_label);
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts = s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
        match s.style {
            Style::Line => {
                let path: Vec<String> = pts.map(|&(a, b)| format!("{:.1},{:.1}", sx(a), sy(b))).collect();
                let _ = write!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                    path.join(" ")
                );
            }
            Style::Points => {
                for &(a, b) in pts {
                    let _ = write!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="1.5" fill="{color}"/>"#, sx(a), sy(b));
                }
            }
        }
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD - 150.0,
            PAD + 14.0 * k as f64,
            escape(&s.name)
        );
    }
    out.push_str("</svg>");
    out
}

/// One box per entry: `(name, [whisker_low, q1, median, q3, whisker_high])`.
pub fn boxplot(title: &str, y_label: &str, boxes: &[(String, [f64; 5])]) -> String {
    let y = bounds(boxes.iter().flat_map(|b| b.1.iter().copied()));
    let sy = |v: f64| H - PAD - (v - y.0) / (y.1 - y.0) * (H - 2.0 * PAD);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, (0.0, boxes.len() as f64), y, "", y_label);
    let slot = (W - 2.0 * PAD) / boxes.len().max(1) as f64;
    for (k, (name, [lo, q1, med, q3, hi])) in boxes.iter().enumerate() {
        let cx = PAD + slot * (k as f64 + 0.5);
        let half = slot * 0.25;
        let color = COLORS[k % COLORS.len()];
        let _ = write!(
            out,
            r#"<line x1="{cx}" y1="{:.1}" x2="{cx}" y2="{:.1}" stroke="{color}"/><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="{color}"/><line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{cx}" y="{}" text-anchor="middle">{}</text>"#,
            sy(*hi),
            sy(*lo),
            cx - half,
            sy(*q3),
            2.0 * half,
            (sy(*q1) - sy(*q3)).max(0.5),
            cx - half,
            sy(*med),
            cx + half,
            sy(*med),
            H - PAD + 30.0,
            escape(name)
        );
    }
    out.push_str("</svg>");
    out
}

/// Grayscale heatmap, darker is lower. NaN cells are left blank.
pub fn heatmap(
    title: &str,
    row_label: &str,
    col_label: &str,
    rows: &[usize],
    cols: &[usize],
    values: &[Vec<f64>],
) -> String {
    let (lo, hi) = bounds(values.iter().flatten().copied());
    let mut out = String::new();
    header(&mut out, title);
    let cw = (W - 2.0 * PAD) / cols.len().max(1) as f64;
    let ch = (H - 2.0 * PAD) / rows.len().max(1) as f64;
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (x, y) = (PAD + cw * j as f64, PAD + ch * i as f64);
            if v.is_finite() {
                let shade = (40.0 + 200.0 * (v - lo) / (hi - lo)) as u8;
                let _ = write!(
                    out,
                    r#"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="rgb({shade},{shade},{shade})"/><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{}">{}</text>"#,
                    x + cw / 2.0,
                    y + ch / 2.0 + 4.0,
                    if shade < 128 { "white" } else { "black" },
                    fmt_tick(*v)
                );
            }
        }
    }
    for (j, c) in cols.iter().enumerate() {
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{c}</text>"#,
            PAD + cw * (j as f64 + 0.5),
            H - PAD + 16.0
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{r}</text>"#,
            PAD - 6.0,
            PAD + ch * (i as f64 + 0.5) + 4.0
        );
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text></svg>"#,
        W / 2.0,
        H - 12.0,
        escape(col_label),
        H / 2.0,
        H / 2.0,
        escape(row_label)
    );
    out
}
