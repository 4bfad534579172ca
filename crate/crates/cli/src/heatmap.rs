//! Archive heatmap as standalone SVG.

use std::fmt::Write;

use finray_core::qd::ArchiveGrid;

const CELL: f64 = 24.0;
const MARGIN: f64 = 60.0;

const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

/// Color for a value in [0, 1]; values outside are clamped.
pub fn color(v: f64) -> String {
    let t = v.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let k = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - k as f64;
    let (a, b) = (VIRIDIS[k], VIRIDIS[k + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// One rect per cell, rows (volume) growing upward, columns (workspace) to
/// the right. Empty cells are grey. `highlight` outlines one cell.
pub fn render(archive: &ArchiveGrid, highlight: Option<(usize, usize)>) -> String {
    let (rows, cols) = (archive.rows, archive.cols);
    let w = cols as f64 * CELL + 2.0 * MARGIN + 60.0;
    let h = rows as f64 * CELL + 2.0 * MARGIN;
    let x0 = MARGIN;
    let y_of = |i: usize| MARGIN + (rows - 1 - i) as f64 * CELL;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for i in 0..rows {
        for j in 0..cols {
            let x = x0 + j as f64 * CELL;
            let y = y_of(i);
            match archive.get(i, j) {
                Some(e) => {
                    let _ = writeln!(
                        s,
                        r#"<rect class="cell" data-i="{i}" data-j="{j}" data-objective="{}" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="white" stroke-width="0.5"/>"#,
                        e.objective,
                        color(e.objective)
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        r##"<rect class="cell empty" data-i="{i}" data-j="{j}" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#e8e8e8" stroke="white" stroke-width="0.5"/>"##
                    );
                }
            }
        }
    }
    if let Some((i, j)) = highlight {
        let x = x0 + j as f64 * CELL;
        let y = y_of(i);
        let _ = writeln!(
            s,
            r#"<rect class="benchmark" data-i="{i}" data-j="{j}" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="none" stroke="red" stroke-width="3"/>"#
        );
    }
    let (wl, wh) = archive.workspace_range;
    let (vl, vh) = archive.volume_range;
    let bottom = MARGIN + rows as f64 * CELL;
    let right = x0 + cols as f64 * CELL;
    let _ = writeln!(s, r#"<text x="{x0}" y="{}" font-size="11">{wl:.0}</text>"#, bottom + 16.0);
    let _ = writeln!(s, r#"<text x="{right}" y="{}" font-size="11" text-anchor="end">{wh:.0}</text>"#, bottom + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">workspace (mm^2)</text>"#, (x0 + right) / 2.0, bottom + 34.0);
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" font-size="11" text-anchor="end">{vl:.0}</text>"#, x0 - 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{MARGIN}" font-size="11" text-anchor="end">{vh:.0}</text>"#, x0 - 4.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">volume (mm^3)</text>"#,
        (MARGIN + bottom) / 2.0,
        (MARGIN + bottom) / 2.0
    );

    // color bar over the domain [0, 1]
    let bx = right + 20.0;
    let steps = 20;
    let bh = rows as f64 * CELL / steps as f64;
    let _ = writeln!(s, r#"<g class="colorbar" data-domain="0 1">"#);
    for k in 0..steps {
        let v = (k as f64 + 0.5) / steps as f64;
        let y = bottom - (k + 1) as f64 * bh;
        let _ = writeln!(s, r#"<rect x="{bx}" y="{y}" width="14" height="{bh}" fill="{}"/>"#, color(v));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" font-size="11">0</text>"#, bx + 18.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11">1</text>"#, bx + 18.0, MARGIN + 8.0);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use finray_core::design::FeatureDescriptor;
    use finray_core::qd::Elite;

    #[test]
    fn endpoints_of_scale() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(2.0), color(1.0));
    }

    #[test]
    fn one_rect_per_cell() {
        let mut a = ArchiveGrid::new(4, 5, (0.0, 1.0), (0.0, 1.0));
        a.add(Elite {
            genotype: vec![],
            objective: 0.5,
            features: FeatureDescriptor {
                workspace: 0.1,
                volume: 0.9,
            },
            evaluation_id: 0,
        });
        let svg = render(&a, Some((0, 0)));
        assert_eq!(svg.matches(r#"class="cell"#).count(), 20);
        assert_eq!(svg.matches(r#"class="cell""#).count(), 1);
        assert_eq!(svg.matches(r#"class="benchmark""#).count(), 1);
        assert!(svg.contains(r#"data-domain="0 1""#));
    }
}
