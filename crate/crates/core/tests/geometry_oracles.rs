//! Geometry oracles: distance/projection/inradius checked against dense
//! boundary sampling, closed-form geometry, and an independent rounded-box
//! SDF reimplementation.

mod common;

use billiards_core::geometry::Domain;
use rand::{Rng, SeedableRng};

#[test]
fn ball_signed_dist_examples() {
    let d = common::disk();
    assert_eq!(d.signed_dist(&[0.0, 0.0]).unwrap(), -1.0);
    assert_eq!(d.signed_dist(&[2.0, 0.0]).unwrap(), 1.0);
}

#[test]
fn ellipse_center_distance_against_parametric_sweep() {
    let e = common::ellipse();
    let sd = e.signed_dist(&[0.0, 0.0]).unwrap();
    assert!((sd + 1.0).abs() < 1e-10, "center sd {sd}");
    // Dense parametric boundary sweep: the nearest point from the center
    // must be a minor pole (0, +-1).
    let mut dmin = f64::INFINITY;
    let mut argmin = (0.0, 0.0);
    for k in 0..2_000_000u32 {
        let t = 2.0 * std::f64::consts::PI * k as f64 / 2e6;
        let (x, y) = (2.0 * t.cos(), t.sin());
        let d = (x * x + y * y).sqrt();
        if d < dmin {
            dmin = d;
            argmin = (x, y);
        }
    }
    assert!((dmin - 1.0).abs() < 1e-10);
    assert!(argmin.0.abs() < 1e-3 && (argmin.1.abs() - 1.0).abs() < 1e-6);
    let p = e.project_any(&[0.0, 0.0]).unwrap();
    assert!(p.point[0].abs() < 1e-9 && (p.point[1].abs() - 1.0).abs() < 1e-9);
}

#[test]
fn ball_projection_examples() {
    let d = common::disk();
    let p = d.boundary_project(&[0.5, 0.0]).unwrap();
    assert!((p.point[0] - 1.0).abs() < 1e-12 && p.point[1].abs() < 1e-12);
    assert!((p.normal[0] - 1.0).abs() < 1e-12);
    let p = d.boundary_project(&[0.0, -0.9]).unwrap();
    assert!(p.point[0].abs() < 1e-12 && (p.point[1] + 1.0).abs() < 1e-12);
    assert!((p.normal[1] + 1.0).abs() < 1e-12);
}

#[test]
fn dumbbell_neck_projection_against_boundary_cloud() {
    let d = common::dumbbell();
    let cloud = common::boundary_cloud(&d, 600);
    assert!(cloud.len() > 500, "cloud size {}", cloud.len());
    // Points near the neck wall: projection distance must match the dense
    // sample to interpolation accuracy, and the projected point must sit on
    // the neck (|x| small, |y| near neck_radius).
    for q in [[0.0, 0.05], [0.1, -0.1], [-0.25, 0.0]] {
        let p = d.project_any(&q).unwrap();
        let oracle = common::min_dist_to_cloud(&q, &cloud);
        assert!(
            (p.dist - oracle).abs() < 2e-3,
            "q {q:?}: dist {} vs cloud {oracle}",
            p.dist
        );
        assert!(p.point[0].abs() < 0.6, "projected x {}", p.point[0]);
    }
    // Random collar points across the whole domain agree with the cloud.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let (lo, hi) = d.bbox();
    let mut checked = 0;
    while checked < 200 {
        let q = [
            rng.gen_range(lo[0]..hi[0]),
            rng.gen_range(lo[1]..hi[1]),
        ];
        let sd = match d.signed_dist(&q) {
            Ok(s) => s,
            Err(_) => {
                // Tolerable only far outside the collar, where the field
                // flattens out and no projection target exists.
                let oracle = common::min_dist_to_cloud(&q, &cloud);
                assert!(
                    oracle > d.collar_width,
                    "projection failed near boundary: q {q:?}, cloud dist {oracle}"
                );
                continue;
            }
        };
        if sd.abs() > d.collar_width {
            continue;
        }
        let oracle = common::min_dist_to_cloud(&q, &cloud);
        assert!(
            (sd.abs() - oracle).abs() < 2e-3,
            "q {q:?}: |sd| {} vs cloud {oracle}",
            sd.abs()
        );
        checked += 1;
    }
}

#[test]
fn metaball_distance_against_boundary_cloud() {
    let d = common::blobs();
    let cloud = common::boundary_cloud(&d, 600);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let (lo, hi) = d.bbox();
    let mut checked = 0;
    while checked < 200 {
        let q = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        let sd = match d.signed_dist(&q) {
            Ok(s) => s,
            Err(_) => {
                let oracle = common::min_dist_to_cloud(&q, &cloud);
                assert!(
                    oracle > d.collar_width,
                    "projection failed near boundary: q {q:?}, cloud dist {oracle}"
                );
                continue;
            }
        };
        if sd.abs() > d.collar_width {
            continue;
        }
        let oracle = common::min_dist_to_cloud(&q, &cloud);
        assert!(
            (sd.abs() - oracle).abs() < 2e-3,
            "q {q:?}: |sd| {} vs cloud {oracle}",
            sd.abs()
        );
        checked += 1;
    }
}

/// Independent rounded-rectangle SDF: distance to each rounded corner disk
/// and each facet strip, assembled from scratch (no shared code with the
/// library's formula).
fn rounded_rect_sd_oracle(q: [f64; 2], hw: [f64; 2], rho: f64) -> f64 {
    let (cx, cy) = (hw[0] - rho, hw[1] - rho);
    let (ax, ay) = (q[0].abs(), q[1].abs());
    if ax <= cx && ay <= cy {
        // Deep core: nearest facet.
        return -(((hw[0] - ax).min(hw[1] - ay)) );
    }
    if ax <= cx {
        return ay - hw[1];
    }
    if ay <= cy {
        return ax - hw[0];
    }
    // Corner sector: distance to the arc around (cx, cy).
    ((ax - cx).powi(2) + (ay - cy).powi(2)).sqrt() - rho
}

#[test]
fn box_inradius_against_independent_sdf() {
    let d = common::rounded_box();
    let (r, w) = d.inradius(16.0).unwrap();
    // Oracle: maximize depth of the independent SDF over a fine grid.
    let mut best = f64::NEG_INFINITY;
    for j in 0..=400 {
        for i in 0..=800 {
            let q = [-2.0 + i as f64 * 0.005, -1.0 + j as f64 * 0.005];
            best = best.max(-rounded_rect_sd_oracle(q, [2.0, 1.0], 0.2));
        }
    }
    assert!((best - 1.0).abs() < 1e-12, "oracle inradius {best}");
    assert!((r - 1.0).abs() < 1e-6, "inradius {r}");
    assert!(w[1].abs() < 1e-3, "witness y {}", w[1]);
    // Random cross-check of the SDF itself against the oracle.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let q = [rng.gen_range(-2.5..2.5), rng.gen_range(-1.5..1.5)];
        let sd = d.signed_dist(&q).unwrap();
        let or = rounded_rect_sd_oracle(q, [2.0, 1.0], 0.2);
        assert!((sd - or).abs() < 1e-12, "q {q:?}: {sd} vs oracle {or}");
    }
}

#[test]
fn inradius_examples_and_monotonicity() {
    let (r, w) = common::disk().inradius(8.0).unwrap();
    assert!((r - 1.0).abs() < 1e-9 && w[0].abs() < 1e-5 && w[1].abs() < 1e-5);
    let (re, _) = common::ellipse().inradius(8.0).unwrap();
    assert!((re - 1.0).abs() < 1e-7, "ellipse inradius {re}");
    // Monotone under inclusion: unit disk inscribed in the (2,1) ellipse.
    assert!(re >= r - 1e-7);
    let (r3, _) = common::ball3().inradius(6.0).unwrap();
    assert!((r3 - 1.0).abs() < 1e-7);
    let (rd, wd) = common::dumbbell().inradius(8.0).unwrap();
    assert!((rd - 1.0).abs() < 2e-3, "dumbbell inradius {rd}");
    assert!(wd[0].abs() > 1.0, "witness should sit in a bulb: {wd:?}");
}

#[test]
fn empty_interior_detected() {
    // A single metaball with blend below the iso level never crosses it.
    let r = Domain::from_json(
        r#"{"dim":2,"shape":"metaball_union","params":{"balls":[{"center":[0.0,0.0],"radius":0.5,"blend":0.3}]}}"#,
    );
    match r {
        Err(billiards_core::geometry::GeomError::EmptyInterior) => {}
        other => panic!("expected EmptyInterior, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn eikonal_property_on_collar_points() {
    let domains: Vec<(&str, Domain)> = vec![
        ("disk", common::disk()),
        ("ball3", common::ball3()),
        ("ellipse", common::ellipse()),
        ("box", common::rounded_box()),
        ("dumbbell", common::dumbbell()),
        ("blobs", common::blobs()),
    ];
    for (name, d) in &domains {
        let (lo, hi) = d.bbox();
        let n = d.dim;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xE1C0);
        let mut checked = 0;
        let mut tries = 0;
        while checked < 10_000 && tries < 400_000 {
            tries += 1;
            let q: Vec<f64> = (0..n).map(|i| rng.gen_range(lo[i]..hi[i])).collect();
            let sd = match d.signed_dist(&q) {
                Ok(s) => s,
                Err(_) => continue,
            };
            if sd.abs() >= d.collar_width {
                continue;
            }
            let h = 1e-6;
            let mut g2 = 0.0;
            let mut qq = q.clone();
            let mut ok = true;
            for i in 0..n {
                qq[i] = q[i] + h;
                let sp = d.signed_dist(&qq);
                qq[i] = q[i] - h;
                let sm = d.signed_dist(&qq);
                qq[i] = q[i];
                match (sp, sm) {
                    (Ok(a), Ok(b)) => {
                        let gi = (a - b) / (2.0 * h);
                        g2 += gi * gi;
                    }
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let gn = g2.sqrt();
            assert!(
                (gn - 1.0).abs() < 1e-6,
                "{name}: |grad sd| = {gn} at {q:?} (sd {sd})"
            );
            checked += 1;
        }
        assert!(checked >= 5000, "{name}: only {checked} collar samples");
    }
}

#[test]
fn projection_idempotence() {
    let domains: Vec<(&str, Domain)> = vec![
        ("disk", common::disk()),
        ("ellipse", common::ellipse()),
        ("box", common::rounded_box()),
        ("dumbbell", common::dumbbell()),
        ("blobs", common::blobs()),
        ("ball3", common::ball3()),
    ];
    for (name, d) in &domains {
        let (lo, hi) = d.bbox();
        let n = d.dim;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x1D3);
        let mut checked = 0;
        while checked < 300 {
            let q: Vec<f64> = (0..n).map(|i| rng.gen_range(lo[i]..hi[i])).collect();
            let sd = match d.signed_dist(&q) {
                Ok(s) => s,
                Err(_) => continue,
            };
            if sd.abs() >= d.collar_width {
                continue;
            }
            let p1 = d.project_any(&q).unwrap();
            // The projected point is on the boundary...
            let sd1 = d.signed_dist(&p1.point).unwrap();
            assert!(sd1.abs() < 1e-10, "{name}: |sd| at projection {sd1:e}");
            // ...and projecting it again moves nowhere.
            let p2 = d.project_any(&p1.point).unwrap();
            let moved: f64 = p1
                .point
                .iter()
                .zip(&p2.point)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(moved < 1e-9, "{name}: reprojection moved {moved:e}");
            checked += 1;
        }
    }
}

#[test]
fn normals_point_outward() {
    let domains = vec![common::disk(), common::ellipse(), common::dumbbell()];
    for d in &domains {
        let (lo, hi) = d.bbox();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 100 {
            let q: Vec<f64> = (0..d.dim).map(|i| rng.gen_range(lo[i]..hi[i])).collect();
            match d.signed_dist(&q) {
                Ok(sd) if sd.abs() < d.collar_width => {}
                _ => continue,
            }
            let p = d.project_any(&q).unwrap();
            let nn: f64 = p.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nn - 1.0).abs() < 1e-12);
            let t = 1e-6;
            let outside: Vec<f64> = p
                .point
                .iter()
                .zip(&p.normal)
                .map(|(a, b)| a + t * b)
                .collect();
            assert!(d.signed_dist(&outside).unwrap() > 0.0);
            checked += 1;
        }
    }
}
