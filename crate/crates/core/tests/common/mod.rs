//! Shared fixtures for the integration suites: the canonical test domains.

// Each test binary compiles this module separately and uses its own subset.
#![allow(dead_code)]

use billiards_core::geometry::Domain;

pub fn disk() -> Domain {
    Domain::from_json(r#"{"dim":2,"shape":"ball","params":{"center":[0.0,0.0],"radius":1.0}}"#)
        .expect("disk")
}

pub fn ball3() -> Domain {
    Domain::from_json(
        r#"{"dim":3,"shape":"ball","params":{"center":[0.0,0.0,0.0],"radius":1.0}}"#,
    )
    .expect("ball3")
}

pub fn ellipse() -> Domain {
    Domain::from_json(
        r#"{"dim":2,"shape":"ellipsoid","params":{"center":[0.0,0.0],"semi_axes":[2.0,1.0]}}"#,
    )
    .expect("ellipse")
}

pub fn rounded_box() -> Domain {
    Domain::from_json(
        r#"{"dim":2,"shape":"smoothed_box","params":{"center":[0.0,0.0],"half_widths":[2.0,1.0],"corner_radius":0.2}}"#,
    )
    .expect("rounded_box")
}

pub fn dumbbell() -> Domain {
    Domain::from_json(
        r#"{"dim":2,"shape":"dumbbell","params":{"centers":[[-1.4,0.0],[1.4,0.0]],"radii":[1.0,1.0],"neck_radius":0.2}}"#,
    )
    .expect("dumbbell")
}

pub fn blobs() -> Domain {
    Domain::from_json(
        r#"{"dim":2,"shape":"metaball_union","params":{"balls":[{"center":[-0.5,0.0],"radius":0.8,"blend":1.0},{"center":[0.6,0.0],"radius":0.7,"blend":1.0}]}}"#,
    )
    .expect("blobs")
}

/// Zero-level crossing points of a 2D domain's signed distance on a fine
/// grid: a dense, implementation-independent sample of the boundary. Each
/// grid edge with a sign change contributes its linear interpolation point.
pub fn boundary_cloud(dom: &Domain, cells: usize) -> Vec<[f64; 2]> {
    assert_eq!(dom.dim, 2);
    let (lo, hi) = dom.bbox();
    let pad = 0.05 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let (x0, y0) = (lo[0] - pad, lo[1] - pad);
    let (x1, y1) = (hi[0] + pad, hi[1] + pad);
    let (dx, dy) = ((x1 - x0) / cells as f64, (y1 - y0) / cells as f64);
    let mut vals = vec![0.0f64; (cells + 1) * (cells + 1)];
    for j in 0..=cells {
        for i in 0..=cells {
            let q = [x0 + i as f64 * dx, y0 + j as f64 * dy];
            vals[j * (cells + 1) + i] = dom.signed_dist(&q).unwrap_or(f64::NAN);
        }
    }
    let at = |i: usize, j: usize| vals[j * (cells + 1) + i];
    let mut pts = Vec::new();
    for j in 0..=cells {
        for i in 0..=cells {
            let a = at(i, j);
            if !a.is_finite() {
                continue;
            }
            if i < cells {
                let b = at(i + 1, j);
                if b.is_finite() && a.signum() != b.signum() {
                    let t = a / (a - b);
                    pts.push([x0 + (i as f64 + t) * dx, y0 + j as f64 * dy]);
                }
            }
            if j < cells {
                let b = at(i, j + 1);
                if b.is_finite() && a.signum() != b.signum() {
                    let t = a / (a - b);
                    pts.push([x0 + i as f64 * dx, y0 + (j as f64 + t) * dy]);
                }
            }
        }
    }
    pts
}

pub fn min_dist_to_cloud(q: &[f64], cloud: &[[f64; 2]]) -> f64 {
    cloud
        .iter()
        .map(|p| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}
