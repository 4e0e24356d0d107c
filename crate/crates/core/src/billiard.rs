//! Direct billiard dynamics: specular reflection, boundary ray shooting,
//! and Newton refinement of closed bounce polygons.
//!
//! This module is the independent oracle for the variational solver: it
//! never sees the penalized action. A trajectory here is a polygon whose
//! vertices lie on the boundary and whose edges obey the reflection law
//! (equal tangential components across each bounce), which is exactly
//! stationarity of the perimeter over boundary vertex positions:
//!
//!   grad_{y_j} L = u_{j-1} - u_j  is parallel to the normal at y_j,
//!
//! with u_j the unit direction of edge y_j -> y_{j+1}. Refinement runs
//! Newton on the tangential-chart gradient with the exact flat Hessian
//! plus a curvature correction, re-anchoring the charts each step.
//!
//! Shooting marches a ray by safe distance steps (the distance to the
//! boundary bounds how far any direction can travel without crossing),
//! brackets the crossing, and polishes the hit with bisection and Newton
//! on the signed distance.

use crate::geometry::{Domain, GeomError};
use crate::linalg::solve_dense;
use thiserror::Error;

/// Velocities with a normal component at or below this fraction of their
/// magnitude graze the wall: reflection is numerically undefined.
pub const TANGENTIAL_REL: f64 = 1e-9;

/// Hit refinement drives |signed distance| at the crossing below this.
const HIT_TOL: f64 = 1e-10;

/// Minimum marching step: forces the ray across the boundary instead of
/// approaching it asymptotically, at the cost of overshooting by at most
/// this much before refinement.
const MIN_STEP: f64 = 1e-6;

/// Ray marching gives up after this many steps or after traveling this
/// many bounding-box diagonals without crossing.
const MARCH_BUDGET: usize = 100_000;
const MARCH_SPAN_DIAGS: f64 = 20.0;

/// Polygon refinement: iteration budget, gradient target relative to the
/// perimeter, and the edge-collapse floor relative to the box diagonal.
const REFINE_BUDGET: usize = 100;
const REFINE_TOL_REL: f64 = 1e-10;
const EDGE_COLLAPSE_REL: f64 = 1e-6;

/// Relative ridge regularization for the refinement Newton system.
const RIDGE_REL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BilliardError {
    #[error("velocity is tangential to the boundary at the bounce point")]
    TangentialIncidence,
    #[error("shoot start point is not in the domain interior")]
    StartOutside,
    #[error("ray marching stalled before reaching the boundary")]
    MarchStall,
    #[error("polygon refinement did not converge within {0} iterations")]
    RefineStalled(usize),
    #[error("a polygon edge collapsed during refinement")]
    CollapsedEdge,
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Specular reflection of `v` at a wall with outward unit normal `nu`.
///
/// Preserves |v| to rounding and flips the sign of the normal component;
/// `v` must actually point outward (positive normal component above the
/// grazing threshold).
pub fn reflect(v: &[f64], nu: &[f64]) -> Result<Vec<f64>, BilliardError> {
    let vn = dot(v, nu);
    if vn <= TANGENTIAL_REL * norm(v) {
        return Err(BilliardError::TangentialIncidence);
    }
    Ok(v.iter().zip(nu).map(|(vi, ni)| vi - 2.0 * vn * ni).collect())
}

/// A shot trajectory: bounce points with the outward normals met there,
/// the outgoing direction after each bounce, and the path length from the
/// start through the last bounce.
#[derive(Debug, Clone)]
pub struct ShootPath {
    pub bounces: Vec<Vec<f64>>,
    pub normals: Vec<Vec<f64>>,
    pub dirs: Vec<Vec<f64>>,
    pub length: f64,
}

fn bbox_diag(dom: &Domain) -> f64 {
    let (lo, hi) = dom.bbox();
    lo.iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
}

/// March from `from` along unit `dir` to the first boundary crossing and
/// refine it. Returns the hit point snapped onto the surface, its outward
/// normal, and the travel distance.
fn march_to_wall(
    dom: &Domain,
    from: &[f64],
    dir: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, f64), BilliardError> {
    let n = dom.dim;
    let span_cap = MARCH_SPAN_DIAGS * bbox_diag(dom);
    let at = |t: f64| -> Vec<f64> { (0..n).map(|k| from[k] + t * dir[k]).collect() };

    // Skip the departure shell: the start may sit on the boundary itself.
    let mut t = MIN_STEP;
    let mut sd = dom.signed_dist(&at(t))?;
    if sd >= 0.0 {
        // Immediately outside: the segment grazes away from the interior.
        return Err(BilliardError::TangentialIncidence);
    }
    let mut crossed = None;
    for _ in 0..MARCH_BUDGET {
        let step = (-sd).max(MIN_STEP);
        let t_next = t + step;
        if t_next > span_cap {
            return Err(BilliardError::MarchStall);
        }
        let sd_next = dom.signed_dist(&at(t_next))?;
        if sd_next >= 0.0 {
            crossed = Some((t, t_next));
            break;
        }
        t = t_next;
        sd = sd_next;
    }
    let (mut lo, mut hi) = crossed.ok_or(BilliardError::MarchStall)?;

    // Bisect the bracket, then polish with Newton on the signed distance.
    for _ in 0..60 {
        if hi - lo <= 1e-14 * (1.0 + hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if dom.signed_dist(&at(mid))? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut th = 0.5 * (lo + hi);
    for _ in 0..20 {
        let p = at(th);
        let proj = dom.project_any(&p)?;
        let sd_h = if proj.inside { -proj.dist } else { proj.dist };
        if sd_h.abs() <= HIT_TOL {
            break;
        }
        let dn = dot(&proj.normal, dir);
        if dn.abs() < 1e-14 {
            break;
        }
        th = (th - sd_h / dn).clamp(lo, hi);
    }
    let proj = dom.project_any(&at(th))?;
    Ok((proj.point.clone(), proj.normal.clone(), th))
}

/// Shoot a ray from an interior point and reflect it `max_bounces` times.
pub fn shoot(
    dom: &Domain,
    start: &[f64],
    dir: &[f64],
    max_bounces: usize,
) -> Result<ShootPath, BilliardError> {
    if !dom.contains(start) {
        return Err(BilliardError::StartOutside);
    }
    let dn = norm(dir);
    if !(dn.is_finite() && dn > 0.0) {
        return Err(BilliardError::StartOutside);
    }
    let mut v: Vec<f64> = dir.iter().map(|x| x / dn).collect();
    let mut pos = start.to_vec();
    let mut path = ShootPath {
        bounces: Vec::with_capacity(max_bounces),
        normals: Vec::with_capacity(max_bounces),
        dirs: Vec::with_capacity(max_bounces),
        length: 0.0,
    };
    for _ in 0..max_bounces {
        let (hit, nu, t) = march_to_wall(dom, &pos, &v)?;
        path.length += t;
        v = reflect(&v, &nu)?;
        path.bounces.push(hit.clone());
        path.normals.push(nu);
        path.dirs.push(v.clone());
        pos = hit;
    }
    Ok(path)
}

/// Closed bounce polygon produced by refinement.
#[derive(Debug, Clone)]
pub struct BouncePolygon {
    pub vertices: Vec<Vec<f64>>,
    /// Outward unit normal at each vertex.
    pub normals: Vec<Vec<f64>>,
    pub length: f64,
    /// Final tangential gradient norm (reflection-law defect).
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Orthonormal tangent basis at a surface point with outward normal `nu`:
/// n-1 columns, each orthogonal to `nu`, by Gram-Schmidt over the axes.
fn tangent_basis(nu: &[f64]) -> Vec<Vec<f64>> {
    let n = nu.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    // Visit axes starting from the one least aligned with the normal.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nu[a].abs().partial_cmp(&nu[b].abs()).unwrap());
    for &ax in &order {
        if basis.len() == n - 1 {
            break;
        }
        let mut v = vec![0.0; n];
        v[ax] = 1.0;
        let vn = dot(&v, nu);
        for k in 0..n {
            v[k] -= vn * nu[k];
        }
        for b in &basis {
            let c = dot(&v, b);
            for k in 0..n {
                v[k] -= c * b[k];
            }
        }
        let len = norm(&v);
        if len > 1e-8 {
            for x in &mut v {
                *x /= len;
            }
            basis.push(v);
        }
    }
    basis
}

/// Geometry of the current polygon: vertices projected to the boundary,
/// normals, tangent bases, perimeter, and the tangential gradient.
struct PolyState {
    verts: Vec<Vec<f64>>,
    normals: Vec<Vec<f64>>,
    bases: Vec<Vec<Vec<f64>>>,
    /// Full-space length gradient at each vertex: u_{j-1} - u_j.
    grads_full: Vec<Vec<f64>>,
    /// Chart gradient, concatenated (k * (n-1)).
    grad: Vec<f64>,
    length: f64,
}

fn poly_state(dom: &Domain, verts_in: &[Vec<f64>]) -> Result<PolyState, BilliardError> {
    let k = verts_in.len();
    let n = dom.dim;
    let mut verts = Vec::with_capacity(k);
    let mut normals = Vec::with_capacity(k);
    for v in verts_in {
        let p = dom.project_any(v)?;
        verts.push(p.point.clone());
        normals.push(p.normal.clone());
    }
    let mut length = 0.0;
    let mut units = Vec::with_capacity(k);
    for j in 0..k {
        let e = sub(&verts[(j + 1) % k], &verts[j]);
        let l = norm(&e);
        length += l;
        units.push(e.iter().map(|x| x / l.max(f64::MIN_POSITIVE)).collect::<Vec<_>>());
    }
    let bases: Vec<_> = normals.iter().map(|nu| tangent_basis(nu)).collect();
    let mut grads_full = Vec::with_capacity(k);
    let mut grad = Vec::with_capacity(k * (n - 1));
    for j in 0..k {
        let prev: &Vec<f64> = &units[(j + k - 1) % k];
        let g: Vec<f64> = (0..n).map(|i| prev[i] - units[j][i]).collect();
        for b in &bases[j] {
            grad.push(dot(&g, b));
        }
        grads_full.push(g);
    }
    Ok(PolyState {
        verts,
        normals,
        bases,
        grads_full,
        grad,
        length,
    })
}

/// Refine an approximate closed polygon to a reflection-law critical point
/// of the perimeter. Seeds need not lie on the boundary; they are projected
/// first. Newton runs in tangential charts re-anchored every step, using
/// the flat length Hessian plus a curvature correction, and falls back to
/// the flat (Gauss-Newton) model when the corrected step is rejected.
pub fn refine_polygon(
    dom: &Domain,
    seed: &[Vec<f64>],
) -> Result<BouncePolygon, BilliardError> {
    let k = seed.len();
    let n = dom.dim;
    assert!(k >= 2, "a bounce polygon needs at least two vertices");
    let nc = n - 1; // chart coordinates per vertex
    let dim = k * nc;
    let diag = bbox_diag(dom);
    let mut st = poly_state(dom, seed)?;

    for iter in 0..REFINE_BUDGET {
        // Degenerate polygons cannot be meaningfully refined.
        for j in 0..k {
            let e = sub(&st.verts[(j + 1) % k], &st.verts[j]);
            if norm(&e) < EDGE_COLLAPSE_REL * diag {
                return Err(BilliardError::CollapsedEdge);
            }
        }
        let gnorm = norm(&st.grad);
        if gnorm <= REFINE_TOL_REL * st.length {
            return Ok(BouncePolygon {
                vertices: st.verts,
                normals: st.normals,
                length: st.length,
                grad_norm: gnorm,
                iterations: iter,
            });
        }

        // Chart Hessian: exact flat part plus optional curvature term.
        let assemble = |with_curvature: bool| -> Result<Vec<f64>, BilliardError> {
            let mut h = vec![0.0; dim * dim];
            let mut add = |vj: usize, a: usize, vk: usize, b: usize, v: f64| {
                h[(vj * nc + a) * dim + (vk * nc + b)] += v;
            };
            for j in 0..k {
                let jn = (j + 1) % k;
                let e = sub(&st.verts[jn], &st.verts[j]);
                let el = norm(&e);
                let u: Vec<f64> = e.iter().map(|x| x / el).collect();
                // P/|e| with P = I - u u^T, contracted with the two charts.
                let contract = |ba: &[Vec<f64>], bb: &[Vec<f64>], a: usize, b: usize| {
                    let ta = &ba[a];
                    let tb = &bb[b];
                    (dot(ta, tb) - dot(ta, &u) * dot(tb, &u)) / el
                };
                for a in 0..nc {
                    for b in 0..nc {
                        add(j, a, j, b, contract(&st.bases[j], &st.bases[j], a, b));
                        add(jn, a, jn, b, contract(&st.bases[jn], &st.bases[jn], a, b));
                        add(j, a, jn, b, -contract(&st.bases[j], &st.bases[jn], a, b));
                        add(jn, a, j, b, -contract(&st.bases[jn], &st.bases[j], a, b));
                    }
                }
            }
            if with_curvature {
                for j in 0..k {
                    // Shape term -<grad L, nu> W, with W from the distance
                    // Hessian just inside the surface (the distance field is
                    // one-sided at the wall).
                    let gn = dot(&st.grads_full[j], &st.normals[j]);
                    let step = dom.fd_step();
                    let inset: Vec<f64> = (0..n)
                        .map(|i| st.verts[j][i] - 100.0 * step * st.normals[j][i])
                        .collect();
                    let hd = dom.dist_hess(&inset, step)?;
                    for a in 0..nc {
                        for b in 0..nc {
                            let ta = &st.bases[j][a];
                            let tb = &st.bases[j][b];
                            let mut w = 0.0;
                            for r in 0..n {
                                for c in 0..n {
                                    w += ta[r] * hd[r * n + c] * tb[c];
                                }
                            }
                            // W = -T' (Hess dist) T; correction is -gn * W.
                            add(j, a, j, b, gn * w);
                        }
                    }
                }
            }
            Ok(h)
        };

        // Try the curvature-corrected Newton step, then the flat fallback.
        let mut accepted = false;
        'models: for with_curv in [true, false] {
            let mut h = assemble(with_curv)?;
            let ridge = RIDGE_REL
                * (0..dim)
                    .map(|i| h[i * dim + i].abs())
                    .fold(f64::MIN_POSITIVE, f64::max);
            for i in 0..dim {
                h[i * dim + i] += ridge;
            }
            let mut rhs: Vec<f64> = st.grad.iter().map(|v| -v).collect();
            if !solve_dense(dim, &mut h, &mut rhs) {
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..8 {
                let mut trial = Vec::with_capacity(k);
                for j in 0..k {
                    let mut p = st.verts[j].clone();
                    for a in 0..nc {
                        let d = alpha * rhs[j * nc + a];
                        for i in 0..n {
                            p[i] += d * st.bases[j][a][i];
                        }
                    }
                    trial.push(p);
                }
                if let Ok(ts) = poly_state(dom, &trial) {
                    if norm(&ts.grad) < (1.0 - 1e-4 * alpha) * gnorm {
                        st = ts;
                        accepted = true;
                        break 'models;
                    }
                }
                alpha *= 0.5;
            }
        }
        if !accepted {
            return Err(BilliardError::RefineStalled(iter));
        }
    }
    Err(BilliardError::RefineStalled(REFINE_BUDGET))
}

/// Crosscheck a closed polygon against direct shooting: start from the
/// midpoint of the first edge, shoot one full circuit, and measure how far
/// the dynamics drift from the polygon.
#[derive(Debug, Clone, Copy)]
pub struct Crosscheck {
    /// |endpoint - start| relative to the perimeter after a full circuit.
    pub displacement_rel: f64,
    /// |shot path length - perimeter| relative to the perimeter.
    pub length_rel: f64,
}

pub fn crosscheck(dom: &Domain, poly: &BouncePolygon) -> Result<Crosscheck, BilliardError> {
    let k = poly.vertices.len();
    let n = dom.dim;
    let v0 = &poly.vertices[0];
    let v1 = &poly.vertices[1 % k];
    let mid: Vec<f64> = (0..n).map(|i| 0.5 * (v0[i] + v1[i])).collect();
    let dir = sub(v1, &mid);
    let path = shoot(dom, &mid, &dir, k)?;
    // One circuit from the midpoint covers the perimeter minus the half
    // edge behind the start; the final bounce should land on vertex 0.
    let half_edge = norm(&sub(v1, v0)) / 2.0;
    let expect_len = poly.length - half_edge;
    let last = path.bounces.last().expect("k >= 2 bounces");
    Ok(Crosscheck {
        displacement_rel: norm(&sub(last, v0)) / poly.length,
        length_rel: (path.length - expect_len).abs() / poly.length,
    })
}

/// Seed polygon for refinement: k boundary points reached by marching from
/// the bounding-box center in evenly spaced directions (offset by
/// `rotation` radians in the first two coordinates).
pub fn polygon_seed(
    dom: &Domain,
    k: usize,
    rotation: f64,
) -> Result<Vec<Vec<f64>>, BilliardError> {
    let n = dom.dim;
    let (lo, hi) = dom.bbox();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    if !dom.contains(&center) {
        return Err(BilliardError::StartOutside);
    }
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let th = rotation + 2.0 * std::f64::consts::PI * j as f64 / k as f64;
        let mut dir = vec![0.0; n];
        dir[0] = th.cos();
        dir[1] = th.sin();
        let (hit, _, _) = march_to_wall(dom, &center, &dir)?;
        out.push(hit);
    }
    Ok(out)
}

/// Product of the angular momenta about the two foci of the ellipse
/// x^2/a^2 + y^2/b^2 = 1 (a >= b): a conserved quantity of elliptic
/// billiards, constant along segments and across reflections.
pub fn focal_momentum_product(a: f64, b: f64, p: &[f64], v: &[f64]) -> f64 {
    let c = (a * a - b * b).sqrt();
    let l1 = (p[0] - c) * v[1] - p[1] * v[0];
    let l2 = (p[0] + c) * v[1] - p[1] * v[0];
    l1 * l2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_flips_normal_keeps_tangent() {
        let v = [0.6, -0.8];
        let nu = [0.0, -1.0]; // wall below, outward normal -y
        let r = reflect(&v, &nu).expect("transversal");
        assert!((r[0] - 0.6).abs() < 1e-15);
        assert!((r[1] - 0.8).abs() < 1e-15);
        assert!((norm(&r) - norm(&v)).abs() < 1e-15);
    }

    #[test]
    fn reflect_rejects_grazing_and_inward() {
        assert!(reflect(&[1.0, 0.0], &[0.0, 1.0]).is_err()); // tangential
        assert!(reflect(&[0.0, -1.0], &[0.0, 1.0]).is_err()); // moving inward
    }

    #[test]
    fn reflect_conserves_speed_over_many_random_calls() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let mut v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut nu: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nn = norm(&nu);
            nu.iter_mut().for_each(|x| *x /= nn);
            if dot(&v, &nu) < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            if let Ok(r) = reflect(&v, &nu) {
                assert!((norm(&r) - norm(&v)).abs() <= 1e-14 * norm(&v));
            }
        }
    }

    #[test]
    fn tangent_basis_is_orthonormal_and_orthogonal_to_normal() {
        let nu = {
            let mut v = vec![0.3, -0.7, 0.648];
            let n = norm(&v);
            v.iter_mut().for_each(|x| *x /= n);
            v
        };
        let basis = tangent_basis(&nu);
        assert_eq!(basis.len(), 2);
        for (i, b) in basis.iter().enumerate() {
            assert!((norm(b) - 1.0).abs() < 1e-12);
            assert!(dot(b, &nu).abs() < 1e-12);
            for other in basis.iter().skip(i + 1) {
                assert!(dot(b, other).abs() < 1e-12);
            }
        }
    }
}
