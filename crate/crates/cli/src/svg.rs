//! Heatmap rendering as plain SVG rectangles.

use std::fmt::Write as _;

use star_core::attribution::AttributionMap;

const CELL: usize = 14;
const LABEL_W: usize = 110;
const HEADER_H: usize = 22;

/// Blue for positive, red for negative, white at zero; `t` in [-1, 1].
pub fn diverging(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    let (r, g, b) = if t >= 0.0 { (fade(t), fade(t), 255) } else { (255, fade(t), fade(t)) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One row per `(kind, layer)`, one column per position, scaled by the
/// largest absolute score.
pub fn heatmap(map: &AttributionMap, title: &str) -> String {
    let rows: Vec<(String, &[f64])> = map
        .kinds
        .iter()
        .flat_map(|&k| (0..map.n_layers).map(move |l| (k, l)))
        .map(|(k, l)| (format!("{l}_{k}"), map.row(k, l).expect("own coordinates")))
        .collect();
    let scale = map.scores().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let width = LABEL_W + CELL * map.seq_len + 10;
    let height = HEADER_H + CELL * rows.len() + 24;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="10">"#).unwrap();
    writeln!(s, r#"<text x="4" y="14">{} (max |score| = {scale:.3e})</text>"#, escape(title)).unwrap();
    for (i, (label, row)) in rows.iter().enumerate() {
        let y = HEADER_H + i * CELL;
        writeln!(s, r#"<text x="4" y="{}">{}</text>"#, y + CELL - 3, escape(label)).unwrap();
        for (p, &v) in row.iter().enumerate() {
            let t = if scale > 0.0 { v / scale } else { 0.0 };
            writeln!(
                s,
                r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"><title>{label} pos {p}: {v:.4e}</title></rect>"#,
                LABEL_W + p * CELL,
                diverging(t)
            )
            .unwrap();
        }
    }
    let axis_y = HEADER_H + rows.len() * CELL + 14;
    for p in (0..map.seq_len).step_by(5) {
        writeln!(s, r#"<text x="{}" y="{axis_y}">{p}</text>"#, LABEL_W + p * CELL).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
