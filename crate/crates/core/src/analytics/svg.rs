use std::fmt::Write;

use crate::montage::Montage;

const SIZE: f64 = 420.0;
const RADIUS: f64 = 14.0;

/// Diverging blue-white-red colour for `v` within `[lo, hi]`.
fn colour(v: f64, lo: f64, hi: f64) -> String {
    let mid = 0.5 * (lo + hi);
    let t = ((v - mid) / (0.5 * (hi - lo))).clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    if t >= 0.0 {
        format!("#ff{0:02x}{0:02x}", fade(t))
    } else {
        format!("#{0:02x}{0:02x}ff", fade(t))
    }
}

/// Flat disc layout of per-channel values: montage rows run front to back,
/// channels within a row left to right.
pub fn render_map_svg(montage: &Montage, values: &[f64], limits: [f64; 2], title: &str) -> String {
    let mut s = String::new();
    let c = SIZE / 2.0;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{h}" viewBox="0 0 {SIZE} {h}">"#,
        h = SIZE + 30.0
    );
    let _ = writeln!(s, r#"<text x="{c}" y="18" text-anchor="middle" font-size="14">{title}</text>"#);
    let _ = writeln!(
        s,
        r##"<circle cx="{c}" cy="{cy}" r="{r}" fill="none" stroke="#444"/>"##,
        cy = c + 25.0,
        r = c - 6.0
    );
    let n_rows = montage.n_rows() as f64;
    for (i, v) in values.iter().enumerate().take(montage.len()) {
        let (row, pos, len) = montage.grid_position(i);
        let y = 25.0 + 24.0 + (row as f64 + 0.5) / n_rows * (SIZE - 48.0);
        // Row width follows the disc chord at this height.
        let dy = (y - 25.0 - c) / (c - 6.0);
        let half = (c - 30.0) * (1.0 - dy * dy).max(0.0).sqrt();
        let x = if len == 1 {
            c
        } else {
            c - half + 2.0 * half * pos as f64 / (len - 1) as f64
        };
        let _ = writeln!(
            s,
            r##"<circle cx="{x:.1}" cy="{y:.1}" r="{RADIUS}" fill="{}" stroke="#222"><title>{} {v:.3}</title></circle>"##,
            colour(*v, limits[0], limits[1]),
            montage.label(i)
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="7">{}</text>"#,
            y + 2.5,
            montage.label(i)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montage::build_reference_montage;

    #[test]
    fn one_circle_per_channel() {
        let m = build_reference_montage();
        let svg = render_map_svg(&m, &vec![0.0; 65], [-1.0, 1.0], "d");
        assert_eq!(svg.matches("<title>").count(), 65);
        assert!(svg.contains(">Cz<"));
    }

    #[test]
    fn colour_scale() {
        assert_eq!(colour(1.0, -1.0, 1.0), "#ff0000");
        assert_eq!(colour(-1.0, -1.0, 1.0), "#0000ff");
        assert_eq!(colour(0.0, -1.0, 1.0), "#ffffff");
    }
}
