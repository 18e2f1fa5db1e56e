use std::fmt::Write;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Scatter plot with one color per distinct label and a legend.
pub fn scatter_svg(coords: &[[f64; 2]], labels: &[String], title: &str) -> String {
    let (w, h, pad) = (640.0, 640.0, 40.0);
    let mut distinct: Vec<&str> = Vec::new();
    for l in labels {
        if !distinct.contains(&l.as_str()) {
            distinct.push(l);
        }
    }
    distinct.sort_unstable();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in coords {
        x0 = x0.min(c[0]);
        x1 = x1.max(c[0]);
        y0 = y0.min(c[1]);
        y1 = y1.max(c[1]);
    }
    let sx = if x1 > x0 { (w - 2.0 * pad) / (x1 - x0) } else { 1.0 };
    let sy = if y1 > y0 { (h - 2.0 * pad) / (y1 - y0) } else { 1.0 };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    for (c, l) in coords.iter().zip(labels) {
        let idx = distinct.iter().position(|d| *d == l).unwrap_or(0);
        let px = pad + (c[0] - x0) * sx;
        let py = h - pad - (c[1] - y0) * sy;
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{}" fill-opacity="0.75"/>"#,
            PALETTE[idx % PALETTE.len()]
        );
    }
    for (i, l) in distinct.iter().enumerate() {
        let y = pad + 16.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#, w - 120.0, y, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            w - 104.0,
            y + 9.0,
            escape(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
