//! Billiard data out of a converged penalized loop.
//!
//! At small eps the loop is straight chords joined by thin turning layers
//! hugging the wall. Bounce arcs are detected as nodes that are both close
//! to the boundary (within a multiple of sqrt(eps)) and sharply curved
//! (discrete curvature far above the median); each cyclic cluster of such
//! nodes contributes one bounce point, the boundary projection of its
//! closest node. Chords replace the smoothed arcs, and the result is
//! checked against billiard kinematics: chords stay inside the domain,
//! node speeds are unit away from the layers, and consecutive chord
//! directions satisfy the reflection law at each bounce point.

use crate::action::DiscreteLoop;
use crate::billiard::{crosscheck, BouncePolygon, BilliardError, Crosscheck};
use crate::geometry::{Domain, GeomError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nodes within this multiple of sqrt(eps) of the wall may be bounce arcs.
pub const BOUNCE_DIST_FACTOR: f64 = 3.0;

/// ...and must also curve this many times the median discrete curvature.
const CURVATURE_SPIKE_FACTOR: f64 = 10.0;

/// Clusters separated by fewer unflagged nodes than this fraction of a
/// sqrt(eps) window are one bounce arc crossed by noise.
const CLUSTER_GAP_FACTOR: f64 = 1.0;

/// Node speeds outside the bounce windows must be unit to this tolerance.
pub const SPEED_TOL: f64 = 0.02;

/// Half-width, in loop-fraction units per sqrt(eps), of the window around
/// each bounce excluded from the speed check.
const SPEED_WINDOW_FACTOR: f64 = 10.0;

/// Chord containment samples per segment and the signed-distance slack.
const CONTAINMENT_SAMPLES: usize = 64;
const CONTAINMENT_TOL: f64 = 1e-8;

/// A bounce whose outgoing chord makes a smaller normal component than
/// this is tangential and cannot be verified as a reflection.
const TANGENTIAL_BOUNCE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("no bounce arcs found in the loop")]
    NoBounces,
    #[error("bounce {index} is tangential (normal component {nc:.3e})")]
    TangentialBounce { index: usize, nc: f64 },
    #[error("chord {index} leaves the domain (signed distance {sd:.3e})")]
    ChordEscapes { index: usize, sd: f64 },
    #[error("node {index} moves at speed {speed:.6} between bounces")]
    SpeedDrift { index: usize, speed: f64 },
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Billiard(#[from] BilliardError),
}

/// A closed billiard trajectory extracted from a penalized loop, with the
/// kinematic residuals measured during extraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BilliardTrajectory {
    pub bounce_points: Vec<Vec<f64>>,
    /// Outward unit normal at each bounce point.
    pub normals: Vec<Vec<f64>>,
    /// Perimeter of the chord polygon.
    pub length: f64,
    /// Free period of the source loop; should match `length` at unit speed.
    pub tau: f64,
    /// |tau - length| / length.
    pub tau_length_rel: f64,
    /// Largest |<u+, nu> + <u-, nu>| over bounces: the normal component
    /// must flip sign exactly under a true reflection.
    pub max_normal_flip: f64,
    /// Largest tangential change of the unit chord direction at a bounce.
    pub max_tangential_err: f64,
    /// Smallest |<u+, nu>|: how far the trajectory is from tangency.
    pub min_normal_component: f64,
    /// Largest |speed - 1| over nodes outside the bounce windows.
    pub speed_max_dev: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cyclic runs of flagged nodes, merged across gaps of up to `max_gap`
/// unflagged nodes, as (start, len) pairs with start in [0, n).
fn cyclic_clusters(flags: &[bool], max_gap: usize) -> Vec<(usize, usize)> {
    let n = flags.len();
    if flags.iter().all(|&f| !f) {
        return Vec::new();
    }
    // Walk from an unflagged anchor so no run wraps past the start.
    let anchor = match flags.iter().position(|&f| !f) {
        Some(a) => a,
        None => return vec![(0, n)],
    };
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for k in 1..=n {
        let i = (anchor + k) % n;
        if flags[i] {
            open = match open {
                None => Some((i, 1)),
                Some((s, l)) => Some((s, l + 1)),
            };
        } else if let Some(run) = open.take() {
            runs.push(run);
        }
    }
    if let Some(run) = open {
        runs.push(run);
    }
    // Merge runs separated by small cyclic gaps.
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        if let Some(last) = merged.last_mut() {
            let end = (last.0 + last.1) % n;
            let gap = (run.0 + n - end) % n;
            if gap <= max_gap {
                last.1 += gap + run.1;
                continue;
            }
        }
        merged.push(run);
    }
    if merged.len() > 1 {
        let first = merged[0];
        let last = *merged.last().unwrap();
        let end = (last.0 + last.1) % n;
        let gap = (first.0 + n - end) % n;
        if gap <= max_gap {
            merged.pop();
            merged[0] = (last.0, last.1 + gap + first.1);
        }
    }
    merged
}

/// Extract the bounce polygon from a loop converged at penalization `eps`
/// and verify its billiard kinematics.
pub fn extract_trajectory(
    dom: &Domain,
    lp: &DiscreteLoop,
    eps: f64,
) -> Result<BilliardTrajectory, ExtractError> {
    let n = lp.node_count();
    let d = lp.dim();
    let nf = n as f64;
    let sqrt_eps = eps.sqrt();

    // Wall distance and discrete curvature per node.
    let mut dists = Vec::with_capacity(n);
    for i in 0..n {
        dists.push(dom.project_any(lp.node(i))?.dist);
    }
    let mut curvature = Vec::with_capacity(n);
    for i in 0..n {
        let prev = lp.node((i + n - 1) % n);
        let here = lp.node(i);
        let next = lp.node((i + 1) % n);
        let c: f64 = (0..d)
            .map(|k| {
                let dd = next[k] - 2.0 * here[k] + prev[k];
                dd * dd
            })
            .sum::<f64>()
            .sqrt();
        curvature.push(nf * nf * c);
    }
    let mut sorted = curvature.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[n / 2];

    let near = BOUNCE_DIST_FACTOR * sqrt_eps;
    let spike = CURVATURE_SPIKE_FACTOR * median;
    let flags: Vec<bool> = (0..n)
        .map(|i| dists[i] < near && curvature[i] > spike)
        .collect();
    let max_gap = ((CLUSTER_GAP_FACTOR * sqrt_eps * nf).ceil() as usize).max(2);
    let clusters = cyclic_clusters(&flags, max_gap);
    if clusters.len() < 2 {
        return Err(ExtractError::NoBounces);
    }

    // One bounce per cluster: the node nearest the wall, projected onto it.
    let mut bounce_nodes = Vec::with_capacity(clusters.len());
    let mut bounce_points = Vec::with_capacity(clusters.len());
    let mut normals = Vec::with_capacity(clusters.len());
    for &(start, len) in &clusters {
        let best = (0..len)
            .map(|k| (start + k) % n)
            .min_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap())
            .expect("nonempty cluster");
        let bp = dom.boundary_project(lp.node(best))?;
        bounce_nodes.push(best);
        bounce_points.push(bp.point);
        normals.push(bp.normal);
    }

    let k = bounce_points.len();
    let mut length = 0.0;
    for j in 0..k {
        length += dist(&bounce_points[(j + 1) % k], &bounce_points[j]);
    }

    chords_stay_inside(dom, &bounce_points)?;

    // Unit speed away from the turning layers.
    let window = SPEED_WINDOW_FACTOR * sqrt_eps;
    let mut speed_max_dev: f64 = 0.0;
    for i in 0..n {
        let s = i as f64 / nf;
        let near_bounce = bounce_nodes.iter().any(|&b| {
            let sb = b as f64 / nf;
            let raw = (s - sb).abs();
            raw.min(1.0 - raw) <= window
        });
        if near_bounce {
            continue;
        }
        let prev = lp.node((i + n - 1) % n);
        let next = lp.node((i + 1) % n);
        let v = nf * dist(next, prev) / 2.0;
        let speed = v / lp.tau;
        let dev = (speed - 1.0).abs();
        if dev > SPEED_TOL {
            return Err(ExtractError::SpeedDrift { index: i, speed });
        }
        speed_max_dev = speed_max_dev.max(dev);
    }

    let (max_normal_flip, max_tangential_err, min_normal_component) =
        reflection_stats(&bounce_points, &normals)?;

    Ok(BilliardTrajectory {
        bounce_points,
        normals,
        length,
        tau: lp.tau,
        tau_length_rel: (lp.tau - length).abs() / length,
        max_normal_flip,
        max_tangential_err,
        min_normal_component,
        speed_max_dev,
    })
}

/// Midpoint-sample every chord of the cyclic polygon and reject any that
/// leaves the closed region.
fn chords_stay_inside(dom: &Domain, points: &[Vec<f64>]) -> Result<(), ExtractError> {
    let k = points.len();
    let d = points[0].len();
    for j in 0..k {
        let a = &points[j];
        let b = &points[(j + 1) % k];
        for m in 0..CONTAINMENT_SAMPLES {
            let t = (m as f64 + 0.5) / CONTAINMENT_SAMPLES as f64;
            let q: Vec<f64> = (0..d).map(|i| a[i] + t * (b[i] - a[i])).collect();
            let sd = dom.signed_dist(&q)?;
            if sd > CONTAINMENT_TOL {
                return Err(ExtractError::ChordEscapes { index: j, sd });
            }
        }
    }
    Ok(())
}

/// Reflection law at each bounce: the normal component of the unit chord
/// direction flips, the tangential part is unchanged. Returns the largest
/// normal flip defect, the largest tangential defect, and the smallest
/// outgoing normal component.
pub fn reflection_stats(
    points: &[Vec<f64>],
    normals: &[Vec<f64>],
) -> Result<(f64, f64, f64), ExtractError> {
    let k = points.len();
    let d = points[0].len();
    let mut max_normal_flip: f64 = 0.0;
    let mut max_tangential_err: f64 = 0.0;
    let mut min_normal_component = f64::INFINITY;
    for j in 0..k {
        let prev = &points[(j + k - 1) % k];
        let here = &points[j];
        let next = &points[(j + 1) % k];
        let lin = dist(here, prev);
        let lout = dist(next, here);
        let u_in: Vec<f64> = (0..d).map(|i| (here[i] - prev[i]) / lin).collect();
        let u_out: Vec<f64> = (0..d).map(|i| (next[i] - here[i]) / lout).collect();
        let nu = &normals[j];
        let nc_out = dot(&u_out, nu);
        if nc_out.abs() <= TANGENTIAL_BOUNCE_TOL {
            return Err(ExtractError::TangentialBounce {
                index: j,
                nc: nc_out.abs(),
            });
        }
        min_normal_component = min_normal_component.min(nc_out.abs());
        max_normal_flip = max_normal_flip.max((dot(&u_in, nu) + nc_out).abs());
        let diff_norm_comp = dot(&u_out, nu) - dot(&u_in, nu);
        let tang: f64 = (0..d)
            .map(|i| {
                let diff = u_out[i] - u_in[i] - diff_norm_comp * nu[i];
                diff * diff
            })
            .sum::<f64>()
            .sqrt();
        max_tangential_err = max_tangential_err.max(tang);
    }
    Ok((max_normal_flip, max_tangential_err, min_normal_component))
}

/// Re-validate a stored bounce polygon from its points alone: snap each
/// point back to the boundary for a fresh normal, then recompute the
/// perimeter, chord containment, and reflection residuals. `tau` is the
/// period claimed by the source; it is carried through unchanged so the
/// period/length comparison reflects the stored data.
pub fn audit_polygon(
    dom: &Domain,
    points: &[Vec<f64>],
    tau: f64,
) -> Result<BilliardTrajectory, ExtractError> {
    if points.len() < 2 {
        return Err(ExtractError::NoBounces);
    }
    let k = points.len();
    let mut bounce_points = Vec::with_capacity(k);
    let mut normals = Vec::with_capacity(k);
    for p in points {
        let bp = dom.boundary_project(p)?;
        bounce_points.push(bp.point);
        normals.push(bp.normal);
    }
    let mut length = 0.0;
    for j in 0..k {
        length += dist(&bounce_points[(j + 1) % k], &bounce_points[j]);
    }
    chords_stay_inside(dom, &bounce_points)?;
    let (max_normal_flip, max_tangential_err, min_normal_component) =
        reflection_stats(&bounce_points, &normals)?;
    Ok(BilliardTrajectory {
        bounce_points,
        normals,
        length,
        tau,
        tau_length_rel: (tau - length).abs() / length,
        max_normal_flip,
        max_tangential_err,
        min_normal_component,
        speed_max_dev: 0.0,
    })
}

/// Replay an extracted trajectory through the direct reflection dynamics
/// and measure the drift after one full circuit.
pub fn crosscheck_trajectory(
    dom: &Domain,
    traj: &BilliardTrajectory,
) -> Result<Crosscheck, BilliardError> {
    let poly = BouncePolygon {
        vertices: traj.bounce_points.clone(),
        normals: traj.normals.clone(),
        length: traj.length,
        grad_norm: traj.max_tangential_err,
        iterations: 0,
    };
    crosscheck(dom, &poly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters_merge_across_small_gaps_and_the_wrap() {
        let n = 24;
        let mut flags = vec![false; n];
        // One run crossing the cyclic seam with a 1-node hole...
        for i in [22, 23, 1, 2] {
            flags[i] = true;
        }
        // ...and a separate run far away.
        for i in [10, 11] {
            flags[i] = true;
        }
        let cl = cyclic_clusters(&flags, 2);
        assert_eq!(cl.len(), 2);
        let lens: Vec<usize> = cl.iter().map(|c| c.1).collect();
        assert!(lens.contains(&2), "far run intact: {cl:?}");
        // 22, 23, the hole at 0, then 1, 2: five nodes in one run.
        assert!(lens.contains(&5), "seam run merged: {cl:?}");
    }

    #[test]
    fn clusters_stay_separate_across_large_gaps() {
        let mut flags = vec![false; 16];
        flags[0] = true;
        flags[8] = true;
        let cl = cyclic_clusters(&flags, 2);
        assert_eq!(cl.len(), 2);
    }

    #[test]
    fn all_flagged_is_one_cluster() {
        let cl = cyclic_clusters(&[true; 8], 1);
        assert_eq!(cl, vec![(0, 8)]);
    }
}
