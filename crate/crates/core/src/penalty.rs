//! Interior penalty potential built from the boundary distance.
//!
//! The potential pushes trajectories away from the wall:
//!
//!   U(q) = k(dist(q, boundary))^-2
//!
//! where k saturates the distance so U flattens to a constant plateau deep
//! inside the domain:
//!
//!   k(x) = x         for x <= d0        (identity)
//!   k(x) = 1.5 * d0  for x >= 2 * d0    (plateau)
//!
//! and on the blend window (d0, 2*d0) the SLOPE is interpolated with the
//! quintic smoothstep S(s) = 6 s^5 - 15 s^4 + 10 s^3, s = (x - d0) / d0:
//!
//!   k'(x) = 1 - S(s)
//!   k(x)  = d0 * (1 + s - int_0^s S) = d0 * (1 + s - (s^6 - 3 s^5 + 2.5 s^4))
//!
//! Blending the slope rather than the value keeps 0 <= k' <= 1 everywhere
//! (a value-space blend overshoots to k' ~ 1.17) and makes k exactly C^2 at
//! both junctions, with k(2 d0) = 1.5 d0 landing on the plateau height.
//!
//! Near the wall U ~ dist^-2; with the scaling eps * U the total energy
//!
//!   H_eps(q, p) = eps * U(q) + |p|^2 / 2
//!
//! is held at E = 1/2, so the turning points approach the boundary like
//! sqrt(eps) and the soft bounces sharpen into billiard reflections as
//! eps -> 0.

use crate::geometry::{Domain, GeomError};
use thiserror::Error;

/// Plateau height as a multiple of d0: k = 1.5 * d0 for x >= 2 * d0.
pub const PLATEAU_FACTOR: f64 = 1.5;

/// The blend window ends at 2 * d0.
pub const BLEND_END_FACTOR: f64 = 2.0;

/// Distances below this are treated as having left the interior: U and its
/// derivatives overflow there, and a node this close to the wall can only
/// come from a catastrophic step the caller should reject.
pub const DIST_FLOOR: f64 = 1e-150;

#[derive(Debug, Error)]
pub enum PenaltyError {
    /// The point is on the wrong side of the boundary (or destructively
    /// close to it); the potential is only defined on the interior.
    #[error("point left the domain interior: {point:?}")]
    OutsideDomain { point: Vec<f64> },
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

/// Saturation parameters plus the penalty strength for one continuation
/// stage. `d0` is fixed per domain; `eps` shrinks along the schedule.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyConfig {
    pub d0: f64,
    pub eps: f64,
}

impl PenaltyConfig {
    pub fn new(d0: f64, eps: f64) -> Self {
        Self { d0, eps }
    }

    /// Plateau height of the saturated distance.
    pub fn k_plateau(&self) -> f64 {
        PLATEAU_FACTOR * self.d0
    }

    /// Potential value on the plateau.
    pub fn u_plateau(&self) -> f64 {
        self.k_plateau().powi(-2)
    }

    /// Total energy eps * U + |p|^2 / 2.
    pub fn hamiltonian(&self, dom: &Domain, q: &[f64], p: &[f64]) -> Result<f64, PenaltyError> {
        let u = potential(dom, self.d0, q)?;
        Ok(self.eps * u + 0.5 * p.iter().map(|v| v * v).sum::<f64>())
    }

    /// Lagrangian |v|^2 / 2 - eps * U.
    pub fn lagrangian(&self, dom: &Domain, q: &[f64], v: &[f64]) -> Result<f64, PenaltyError> {
        let u = potential(dom, self.d0, q)?;
        Ok(0.5 * v.iter().map(|x| x * x).sum::<f64>() - self.eps * u)
    }
}

/// Saturated distance profile: (k, k', k'') at x >= 0.
pub fn k_profile(x: f64, d0: f64) -> (f64, f64, f64) {
    if x <= d0 {
        return (x, 1.0, 0.0);
    }
    if x >= BLEND_END_FACTOR * d0 {
        return (PLATEAU_FACTOR * d0, 0.0, 0.0);
    }
    let s = (x - d0) / d0;
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s2 * s2;
    let smooth = 6.0 * s4 * s - 15.0 * s4 + 10.0 * s3;
    let dsmooth = 30.0 * s4 - 60.0 * s3 + 30.0 * s2;
    let int_smooth = s4 * s2 - 3.0 * s4 * s + 2.5 * s4;
    let k = d0 * (1.0 + s - int_smooth);
    let dk = 1.0 - smooth;
    let d2k = -dsmooth / d0;
    (k, dk, d2k)
}

/// Scalar potential profile: (U, dU/dx, d2U/dx2) as functions of the
/// boundary distance x.
pub fn u_profile(x: f64, d0: f64) -> (f64, f64, f64) {
    let (k, dk, d2k) = k_profile(x, d0);
    let k3 = k * k * k;
    let u = 1.0 / (k * k);
    let du = -2.0 * dk / k3;
    let d2u = 6.0 * dk * dk / (k3 * k) - 2.0 * d2k / k3;
    (u, du, d2u)
}

/// Projection-aware guard shared by the potential evaluators: Ok(dist) for a
/// usable interior point, Err otherwise.
fn interior_dist(dom: &Domain, q: &[f64]) -> Result<f64, PenaltyError> {
    let p = dom.project_any(q)?;
    if !p.inside || p.dist < DIST_FLOOR {
        return Err(PenaltyError::OutsideDomain { point: q.to_vec() });
    }
    Ok(p.dist)
}

/// Potential value. Deep interior points (cheap depth bound >= 2 * d0) skip
/// the projection entirely: U is constant there.
pub fn potential(dom: &Domain, d0: f64, q: &[f64]) -> Result<f64, PenaltyError> {
    if dom.interior_depth_bound(q) >= BLEND_END_FACTOR * d0 {
        return Ok((PLATEAU_FACTOR * d0).powi(-2));
    }
    let dist = interior_dist(dom, q)?;
    Ok(u_profile(dist, d0).0)
}

/// Potential value and gradient. The gradient vanishes identically on the
/// plateau, so the fast path returns zeros without projecting.
pub fn potential_grad(dom: &Domain, d0: f64, q: &[f64]) -> Result<(f64, Vec<f64>), PenaltyError> {
    let n = dom.dim;
    if dom.interior_depth_bound(q) >= BLEND_END_FACTOR * d0 {
        return Ok(((PLATEAU_FACTOR * d0).powi(-2), vec![0.0; n]));
    }
    let p = dom.project_any(q)?;
    if !p.inside || p.dist < DIST_FLOOR {
        return Err(PenaltyError::OutsideDomain { point: q.to_vec() });
    }
    let (u, du, _) = u_profile(p.dist, d0);
    // grad dist = (q - y) / |q - y| points inward for interior q.
    let grad: Vec<f64> = (0..n)
        .map(|i| du * (q[i] - p.point[i]) / p.dist)
        .collect();
    Ok((u, grad))
}

/// Potential value, gradient, and Hessian (row-major n x n):
///   Hess U = U''(d) grad_d grad_d^T + U'(d) Hess d,
/// with Hess d obtained by central differences of the projection gradient.
pub fn potential_hess(
    dom: &Domain,
    d0: f64,
    q: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>), PenaltyError> {
    let n = dom.dim;
    if dom.interior_depth_bound(q) >= BLEND_END_FACTOR * d0 {
        return Ok((
            (PLATEAU_FACTOR * d0).powi(-2),
            vec![0.0; n],
            vec![0.0; n * n],
        ));
    }
    let p = dom.project_any(q)?;
    if !p.inside || p.dist < DIST_FLOOR {
        return Err(PenaltyError::OutsideDomain { point: q.to_vec() });
    }
    let (u, du, d2u) = u_profile(p.dist, d0);
    let gd: Vec<f64> = (0..n).map(|i| (q[i] - p.point[i]) / p.dist).collect();
    let grad: Vec<f64> = gd.iter().map(|v| du * v).collect();
    let hd = dom.dist_hess(q, dom.fd_step())?;
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            hess[i * n + j] = d2u * gd[i] * gd[j] + du * hd[i * n + j];
        }
    }
    Ok((u, grad, hess))
}
