use std::fmt::Write;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Renders `[N, 2]` points as an SVG scatter plot, coloured by label.
pub fn scatter_svg(points: &[f32], labels: Option<&[i64]>, size: u32) -> String {
    let n = points.len() / 2;
    let (mut min, mut max) = ([f32::INFINITY; 2], [f32::NEG_INFINITY; 2]);
    for p in points.chunks_exact(2) {
        for a in 0..2 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a]);
        }
    }
    let margin = 0.05 * size as f32;
    let inner = size as f32 - 2.0 * margin;
    let span = (0..2)
        .map(|a| (max[a] - min[a]).max(f32::EPSILON))
        .fold(0.0f32, f32::max);
    let mut distinct: Vec<i64> = labels.map(|l| l.to_vec()).unwrap_or_default();
    distinct.sort_unstable();
    distinct.dedup();

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..n {
        let x = margin + (points[2 * i] - min[0]) / span * inner;
        // SVG y grows downward
        let y = size as f32 - margin - (points[2 * i + 1] - min[1]) / span * inner;
        let colour = match labels {
            Some(l) => PALETTE[distinct.binary_search(&l[i]).unwrap_or(0) % PALETTE.len()],
            None => PALETTE[0],
        };
        let title = labels.map(|l| format!("<title>{}</title>", l[i])).unwrap_or_default();
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{colour}" fill-opacity="0.8">{title}</circle>"#
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_circle_per_point() {
        let svg = scatter_svg(&[0.0, 0.0, 1.0, 2.0, -1.0, 0.5], Some(&[1, 2, 1]), 200);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
