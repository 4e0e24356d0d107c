//! Self-contained SVG rendering for planar (n = 2) runs.
//!
//! The domain outline is traced by marching squares over a signed-distance
//! grid: each grid cell is classified by the sign of the distance at its
//! corners, zero crossings are placed on cell edges by linear interpolation,
//! and the ambiguous saddle cases are resolved with the cell-center sign.
//! Orbit polylines and bounce markers are drawn on top in world coordinates
//! (a scale(1,-1) group keeps the usual y-up orientation).

use billiards_core::geometry::Domain;

/// Grid cells per axis for the outline trace.
const OUTLINE_CELLS: usize = 256;
/// Margin around the domain bounding box, as a fraction of its extent.
const FRAME_MARGIN: f64 = 0.08;

/// A polyline in world coordinates; closed paths repeat no vertex.
pub struct Path {
    pub points: Vec<Vec<f64>>,
    pub closed: bool,
}

/// Boundary segments of the zero level set, in world coordinates.
pub fn outline_segments(dom: &Domain) -> Vec<[[f64; 2]; 2]> {
    let (lo, hi) = dom.bbox();
    let (x0, x1) = pad(lo[0], hi[0]);
    let (y0, y1) = pad(lo[1], hi[1]);
    let n = OUTLINE_CELLS;
    let dx = (x1 - x0) / n as f64;
    let dy = (y1 - y0) / n as f64;

    let sd = |x: f64, y: f64| dom.signed_dist(&[x, y]).unwrap_or(f64::NAN);
    let mut grid = vec![0.0f64; (n + 1) * (n + 1)];
    for j in 0..=n {
        for i in 0..=n {
            grid[j * (n + 1) + i] = sd(x0 + i as f64 * dx, y0 + j as f64 * dy);
        }
    }

    let mut segs = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let s00 = grid[j * (n + 1) + i];
            let s10 = grid[j * (n + 1) + i + 1];
            let s01 = grid[(j + 1) * (n + 1) + i];
            let s11 = grid[(j + 1) * (n + 1) + i + 1];
            if !(s00.is_finite() && s10.is_finite() && s01.is_finite() && s11.is_finite()) {
                continue;
            }
            let cx = x0 + i as f64 * dx;
            let cy = y0 + j as f64 * dy;
            // Zero crossing between corner values a (at ca) and b (at cb).
            let lerp = |a: f64, b: f64, ca: f64, cb: f64| ca + (a / (a - b)) * (cb - ca);
            let bottom = || [lerp(s00, s10, cx, cx + dx), cy];
            let top = || [lerp(s01, s11, cx, cx + dx), cy + dy];
            let left = || [cx, lerp(s00, s01, cy, cy + dy)];
            let right = || [cx + dx, lerp(s10, s11, cy, cy + dy)];

            let case = (s00 < 0.0) as u8
                | ((s10 < 0.0) as u8) << 1
                | ((s11 < 0.0) as u8) << 2
                | ((s01 < 0.0) as u8) << 3;
            match case {
                0 | 15 => {}
                1 | 14 => segs.push([left(), bottom()]),
                2 | 13 => segs.push([bottom(), right()]),
                3 | 12 => segs.push([left(), right()]),
                4 | 11 => segs.push([right(), top()]),
                6 | 9 => segs.push([bottom(), top()]),
                7 | 8 => segs.push([left(), top()]),
                5 | 10 => {
                    // Saddle: pick the pairing consistent with the center sign.
                    let center = sd(cx + 0.5 * dx, cy + 0.5 * dy);
                    let joined = (center < 0.0) == (case == 5);
                    if joined {
                        segs.push([left(), top()]);
                        segs.push([bottom(), right()]);
                    } else {
                        segs.push([left(), bottom()]);
                        segs.push([right(), top()]);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    segs
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    let m = FRAME_MARGIN * (hi - lo);
    (lo - m, hi + m)
}

fn fmt(x: f64) -> String {
    format!("{x:.5}")
}

/// Render the domain outline with overlaid paths and dot markers.
pub fn render_plane(dom: &Domain, paths: &[Path], dots: &[Vec<f64>]) -> String {
    let (lo, hi) = dom.bbox();
    let (x0, x1) = pad(lo[0], hi[0]);
    let (y0, y1) = pad(lo[1], hi[1]);
    let (w, h) = (x1 - x0, y1 - y0);
    let unit = w.max(h);
    let stroke = 0.006 * unit;
    let dot_r = 0.013 * unit;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"640\">\n",
        fmt(x0),
        fmt(-y1),
        fmt(w),
        fmt(h)
    ));
    out.push_str(&format!(
        "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
        fmt(x0),
        fmt(-y1),
        fmt(w),
        fmt(h)
    ));
    out.push_str("  <g transform=\"scale(1,-1)\">\n");

    let mut d = String::new();
    for seg in outline_segments(dom) {
        d.push_str(&format!(
            "M {} {} L {} {} ",
            fmt(seg[0][0]),
            fmt(seg[0][1]),
            fmt(seg[1][0]),
            fmt(seg[1][1])
        ));
    }
    out.push_str(&format!(
        "    <path d=\"{}\" fill=\"none\" stroke=\"#3a6ea5\" stroke-width=\"{}\"/>\n",
        d.trim_end(),
        fmt(stroke)
    ));

    for path in paths {
        let mut d = String::new();
        for (i, p) in path.points.iter().enumerate() {
            d.push_str(if i == 0 { "M " } else { "L " });
            d.push_str(&format!("{} {} ", fmt(p[0]), fmt(p[1])));
        }
        if path.closed {
            d.push('Z');
        }
        out.push_str(&format!(
            "    <path d=\"{}\" fill=\"none\" stroke=\"#c23b22\" stroke-width=\"{}\"/>\n",
            d.trim_end(),
            fmt(stroke)
        ));
    }

    for p in dots {
        out.push_str(&format!(
            "    <circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#1a1a1a\"/>\n",
            fmt(p[0]),
            fmt(p[1]),
            fmt(dot_r)
        ));
    }

    out.push_str("  </g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk() -> Domain {
        Domain::from_json(r#"{"dim": 2, "shape": "ball", "params": {"radius": 1.0}}"#).unwrap()
    }

    #[test]
    fn outline_hugs_the_unit_circle() {
        let dom = disk();
        let segs = outline_segments(&dom);
        assert!(segs.len() > 100);
        // Every segment endpoint sits within a cell diagonal of the circle.
        let cell = 2.32 / OUTLINE_CELLS as f64;
        for seg in &segs {
            for p in seg {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                assert!((r - 1.0).abs() < 2.0 * cell, "outline point at radius {r}");
            }
        }
    }

    #[test]
    fn render_emits_wellformed_markup() {
        let dom = disk();
        let path = Path {
            points: vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            closed: true,
        };
        let svg = render_plane(&dom, &[path], &[vec![1.0, 0.0]]);
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<circle"));
        assert_eq!(svg.matches("<path").count(), 2);
    }
}
