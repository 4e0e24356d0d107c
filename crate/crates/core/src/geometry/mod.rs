//! Implicit bounded domains of R^n with boundary distance, outward normals,
//! projection, and inradius estimation.
//!
//! A Domain wraps one shape kernel (ball, ellipsoid, smoothed box, metaball
//! union, dumbbell) behind a uniform query surface:
//!   signed_dist  negative inside, positive outside, |grad| = 1 near the
//!                boundary (projection-based evaluation for curved shapes)
//!   project      nearest boundary point + outward unit normal
//!   dist_grad    interior boundary distance and its gradient
//!   dist_hess    distance Hessian by central differences of dist_grad
//!
//! Building a domain runs a one-time calibration: inradius by refined grid
//! search plus simplex polish, a collar width 0.4 * inradius inside which
//! curved-shape queries are fully trusted, and a reach estimate from
//! finite-difference curvatures at sampled boundary points. Those feed the
//! default cutoff scale d0 = min(1/4, collar/2, reach/4) used by the
//! penalty layer: the distance function must stay smooth on the tube
//! {dist <= 2 d0}.

pub mod ellipsoid;
pub mod exact;
pub mod field;
mod neldermead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("non-finite coordinate in query point {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error("boundary projection failed to converge from {point:?}")]
    ProjectionFailure { point: Vec<f64> },
    #[error("point lies outside the trusted collar (|signed_dist| = {sd:.3e} >= {collar:.3e})")]
    OutsideCollar { sd: f64, collar: f64 },
    #[error("no grid point lies inside the region")]
    EmptyInterior,
    #[error("invalid domain spec: {0}")]
    BadSpec(String),
}

/// Nearest-boundary data for a query point.
pub struct Projection {
    pub point: Vec<f64>,
    /// Outward unit normal at `point`.
    pub normal: Vec<f64>,
    /// Unsigned distance |q - point|.
    pub dist: f64,
    pub inside: bool,
}

/// A point on the boundary with its outward unit normal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
}

/// Shape-specific distance queries; implemented per shape family.
pub trait ShapeKernel: Send + Sync {
    fn dim(&self) -> usize;
    fn signed_dist(&self, q: &[f64]) -> Result<f64, GeomError>;
    fn project(&self, q: &[f64]) -> Result<Projection, GeomError>;
    fn bbox(&self) -> (Vec<f64>, Vec<f64>);
    /// Cheap lower bound on boundary distance for interior points; 0 means
    /// "unknown". Lets callers skip projection deep inside.
    fn interior_depth_bound(&self, q: &[f64]) -> f64 {
        let _ = q;
        0.0
    }
}

// ---------------------------------------------------------------------------
// Spec file model
// ---------------------------------------------------------------------------

/// On-disk domain description:
/// {"dim": n, "shape": "<name>", "params": {...}}. Unknown fields rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub dim: usize,
    pub shape: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BallParams {
    #[serde(default)]
    center: Option<Vec<f64>>,
    radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EllipsoidParams {
    #[serde(default)]
    center: Option<Vec<f64>>,
    semi_axes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SmoothedBoxParams {
    #[serde(default)]
    center: Option<Vec<f64>>,
    half_widths: Vec<f64>,
    corner_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaballBallParams {
    center: Vec<f64>,
    radius: f64,
    #[serde(default = "default_blend")]
    blend: f64,
}

fn default_blend() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaballUnionParams {
    balls: Vec<MetaballBallParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumbbellParams {
    centers: [Vec<f64>; 2],
    radii: [f64; 2],
    neck_radius: f64,
    #[serde(default)]
    smoothing: Option<f64>,
}

/// An omitted center means the origin.
fn resolve_center(center: Option<Vec<f64>>, dim: usize) -> Result<Vec<f64>, GeomError> {
    match center {
        Some(c) => {
            check_dim("center", &c, dim)?;
            Ok(c)
        }
        None => Ok(vec![0.0; dim]),
    }
}

fn check_dim(name: &str, v: &[f64], dim: usize) -> Result<(), GeomError> {
    if v.len() != dim {
        return Err(GeomError::BadSpec(format!(
            "{name} has {} components, expected dim = {dim}",
            v.len()
        )));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(GeomError::BadSpec(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn build_kernel(spec: &DomainSpec) -> Result<Box<dyn ShapeKernel>, GeomError> {
    let dim = spec.dim;
    if !(1..=8).contains(&dim) {
        return Err(GeomError::BadSpec(format!("dim {dim} out of range 1..=8")));
    }
    let bad = |e: serde_json::Error| GeomError::BadSpec(format!("params: {e}"));
    match spec.shape.as_str() {
        "ball" => {
            let p: BallParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
            let center = resolve_center(p.center, dim)?;
            if !(p.radius > 0.0) {
                return Err(GeomError::BadSpec("radius must be positive".into()));
            }
            Ok(Box::new(exact::Ball {
                center,
                radius: p.radius,
            }))
        }
        "ellipsoid" => {
            let p: EllipsoidParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
            let center = resolve_center(p.center, dim)?;
            check_dim("semi_axes", &p.semi_axes, dim)?;
            if !p.semi_axes.iter().all(|a| *a > 0.0) {
                return Err(GeomError::BadSpec("semi_axes must be positive".into()));
            }
            Ok(Box::new(ellipsoid::Ellipsoid {
                center,
                semi_axes: p.semi_axes,
            }))
        }
        "smoothed_box" => {
            let p: SmoothedBoxParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
            let center = resolve_center(p.center, dim)?;
            check_dim("half_widths", &p.half_widths, dim)?;
            let hmin = p.half_widths.iter().cloned().fold(f64::INFINITY, f64::min);
            if !p.half_widths.iter().all(|a| *a > 0.0) {
                return Err(GeomError::BadSpec("half_widths must be positive".into()));
            }
            if !(p.corner_radius > 0.0 && p.corner_radius <= hmin) {
                return Err(GeomError::BadSpec(
                    "corner_radius must lie in (0, min half_width]".into(),
                ));
            }
            Ok(Box::new(exact::SmoothedBox {
                center,
                half_widths: p.half_widths,
                corner_radius: p.corner_radius,
            }))
        }
        "metaball_union" => {
            let p: MetaballUnionParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
            if p.balls.is_empty() {
                return Err(GeomError::BadSpec("metaball_union needs >= 1 ball".into()));
            }
            let mut balls = Vec::new();
            for b in &p.balls {
                check_dim("ball center", &b.center, dim)?;
                balls.push((b.center.clone(), b.radius, b.blend));
            }
            Ok(Box::new(field::FieldShape::new(field::MetaballUnion::new(
                dim, &balls,
            )?)))
        }
        "dumbbell" => {
            let p: DumbbellParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
            check_dim("centers[0]", &p.centers[0], dim)?;
            check_dim("centers[1]", &p.centers[1], dim)?;
            Ok(Box::new(field::FieldShape::new(field::Dumbbell::new(
                dim,
                p.centers,
                p.radii,
                p.neck_radius,
                p.smoothing,
            )?)))
        }
        other => Err(GeomError::BadSpec(format!("unknown shape '{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// Domain
// ---------------------------------------------------------------------------

pub struct Domain {
    pub spec: DomainSpec,
    pub dim: usize,
    kernel: Box<dyn ShapeKernel>,
    /// Grid + polish estimate of the inradius and its witness point.
    pub inradius_est: f64,
    pub witness: Vec<f64>,
    /// Queries within |signed_dist| < collar_width are fully trusted.
    pub collar_width: f64,
    /// 1 / (max sampled boundary curvature); infinite for flat boundaries.
    pub reach_est: f64,
    /// Default penalty cutoff scale; see module docs.
    pub d0_default: f64,
}

impl Domain {
    pub fn from_spec(spec: &DomainSpec) -> Result<Self, GeomError> {
        let kernel = build_kernel(spec)?;
        let dim = spec.dim;
        let (inradius_est, witness) = inradius_impl(kernel.as_ref(), 8.0)?;
        let collar_width = 0.4 * inradius_est;
        let reach_est = estimate_reach(kernel.as_ref(), &witness, inradius_est);
        let d0_default = (0.25f64).min(collar_width / 2.0).min(reach_est / 4.0);
        Ok(Self {
            spec: spec.clone(),
            dim,
            kernel,
            inradius_est,
            witness,
            collar_width,
            reach_est,
            d0_default,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, GeomError> {
        let spec: DomainSpec =
            serde_json::from_str(text).map_err(|e| GeomError::BadSpec(e.to_string()))?;
        Self::from_spec(&spec)
    }

    fn check_finite(&self, q: &[f64]) -> Result<(), GeomError> {
        if q.len() != self.dim || !q.iter().all(|x| x.is_finite()) {
            return Err(GeomError::NonFinite { point: q.to_vec() });
        }
        Ok(())
    }

    /// Signed boundary distance: negative inside, positive outside.
    pub fn signed_dist(&self, q: &[f64]) -> Result<f64, GeomError> {
        self.check_finite(q)?;
        self.kernel.signed_dist(q)
    }

    /// Nearest boundary point, without the collar precondition (internal
    /// callers that handle large distances themselves).
    pub fn project_any(&self, q: &[f64]) -> Result<Projection, GeomError> {
        self.check_finite(q)?;
        self.kernel.project(q)
    }

    /// Nearest boundary point with outward normal. Guaranteed-accurate inside
    /// the trusted collar; farther out the projection is still attempted and
    /// returned when it converges, with OutsideCollar raised only when it
    /// does not (beyond the collar, failure is expected rather than a bug).
    pub fn boundary_project(&self, q: &[f64]) -> Result<BoundaryPoint, GeomError> {
        self.check_finite(q)?;
        match self.kernel.project(q) {
            Ok(p) => Ok(BoundaryPoint {
                point: p.point,
                normal: p.normal,
            }),
            Err(e) => {
                let sd = self.kernel.signed_dist(q).unwrap_or(f64::INFINITY);
                if sd.abs() >= self.collar_width {
                    Err(GeomError::OutsideCollar {
                        sd,
                        collar: self.collar_width,
                    })
                } else {
                    Err(e)
                }
            }
        }
    }

    /// Interior boundary distance and its gradient (unit vector pointing
    /// inward, away from the nearest boundary point).
    pub fn dist_grad(&self, q: &[f64]) -> Result<(f64, Vec<f64>), GeomError> {
        self.check_finite(q)?;
        let p = self.kernel.project(q)?;
        if p.dist < 1e-14 {
            return Err(GeomError::ProjectionFailure { point: q.to_vec() });
        }
        let g: Vec<f64> = q
            .iter()
            .zip(&p.point)
            .map(|(a, y)| (a - y) / p.dist)
            .collect();
        Ok((p.dist, g))
    }

    /// Distance Hessian by central differences of dist_grad, row-major.
    /// `step` is absolute; callers use fd_step().
    pub fn dist_hess(&self, q: &[f64], step: f64) -> Result<Vec<f64>, GeomError> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        let mut qp = q.to_vec();
        for j in 0..n {
            qp[j] = q[j] + step;
            let (_, gp) = self.dist_grad(&qp)?;
            qp[j] = q[j] - step;
            let (_, gm) = self.dist_grad(&qp)?;
            qp[j] = q[j];
            for i in 0..n {
                h[i * n + j] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        // Symmetrize: FD noise breaks exact symmetry.
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (h[i * n + j] + h[j * n + i]);
                h[i * n + j] = m;
                h[j * n + i] = m;
            }
        }
        Ok(h)
    }

    /// Default step for distance-Hessian differences.
    pub fn fd_step(&self) -> f64 {
        1e-5 * self.inradius_est
    }

    /// Cheap lower bound on boundary distance for interior points.
    pub fn interior_depth_bound(&self, q: &[f64]) -> f64 {
        self.kernel.interior_depth_bound(q)
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        self.kernel.bbox()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        self.signed_dist(q).map(|sd| sd < 0.0).unwrap_or(false)
    }

    /// Inradius by refined grid search and simplex polish; also returns the
    /// witness (deepest interior point found). `grid_density` is samples per
    /// unit length per axis. The result is a lower bound on the true
    /// inradius, within 2/grid_density of it for C^2 boundaries (distance is
    /// 1-Lipschitz, so the coarse grid already lands within half a cell
    /// diagonal of the maximizer).
    pub fn inradius(&self, grid_density: f64) -> Result<(f64, Vec<f64>), GeomError> {
        inradius_impl(self.kernel.as_ref(), grid_density)
    }
}

fn inradius_impl(
    kernel: &dyn ShapeKernel,
    grid_density: f64,
) -> Result<(f64, Vec<f64>), GeomError> {
    if !(grid_density > 0.0) {
        return Err(GeomError::BadSpec("grid_density must be positive".into()));
    }
    let n = kernel.dim();
    let (lo, hi) = kernel.bbox();
    let mut steps = vec![0usize; n];
    let mut total: usize = 1;
    for i in 0..n {
        let s = (((hi[i] - lo[i]) * grid_density).ceil() as usize).clamp(4, 400);
        steps[i] = s;
        total = total.saturating_mul(s + 1);
    }
    // Keep worst-case grids bounded; accuracy is restored by refinement.
    if total > 4_000_000 {
        return Err(GeomError::BadSpec(
            "inradius grid too large; lower grid_density".into(),
        ));
    }

    let depth = |q: &[f64]| -> f64 {
        match kernel.signed_dist(q) {
            Ok(sd) => -sd,
            Err(_) => f64::NEG_INFINITY,
        }
    };

    // Coarse scan.
    let mut best_d = f64::NEG_INFINITY;
    let mut best_q = lo.clone();
    let mut idx = vec![0usize; n];
    let mut q = vec![0.0; n];
    'outer: loop {
        for i in 0..n {
            q[i] = lo[i] + (hi[i] - lo[i]) * (idx[i] as f64) / (steps[i] as f64);
        }
        let d = depth(&q);
        if d > best_d {
            best_d = d;
            best_q.copy_from_slice(&q);
        }
        // Odometer increment.
        for i in 0..n {
            idx[i] += 1;
            if idx[i] <= steps[i] {
                continue 'outer;
            }
            idx[i] = 0;
        }
        break;
    }
    if !(best_d > 0.0) {
        return Err(GeomError::EmptyInterior);
    }

    // Three rounds of 4x subdivision around the incumbent.
    let mut h: f64 = (0..n)
        .map(|i| (hi[i] - lo[i]) / steps[i] as f64)
        .fold(0.0, f64::max);
    for _ in 0..3 {
        let fine = h / 4.0;
        let mut idx = vec![0usize; n];
        let center = best_q.clone();
        'refine: loop {
            for i in 0..n {
                q[i] = center[i] - h + fine * idx[i] as f64;
            }
            let d = depth(&q);
            if d > best_d {
                best_d = d;
                best_q.copy_from_slice(&q);
            }
            for i in 0..n {
                idx[i] += 1;
                if idx[i] <= 8 {
                    continue 'refine;
                }
                idx[i] = 0;
            }
            break;
        }
        h = fine;
    }

    // Simplex polish.
    let (xp, vp) = neldermead::minimize(&best_q, h, 200 * n, 1e-12, |p| -depth(p));
    if -vp > best_d {
        best_d = -vp;
        best_q = xp;
    }
    Ok((best_d, best_q))
}

/// Reach estimate: 1 / max |curvature| over ~100 boundary points, curvature
/// from a finite-difference Hessian of signed_dist. Rays from the witness
/// bracket the boundary; directions cover the sphere deterministically.
fn estimate_reach(kernel: &dyn ShapeKernel, witness: &[f64], scale: f64) -> f64 {
    let n = kernel.dim();
    let dirs = sphere_directions(n, 100);
    let (lo, hi) = kernel.bbox();
    let diag: f64 = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    let sd = |q: &[f64]| kernel.signed_dist(q).unwrap_or(f64::NAN);
    let h = 1e-4 * scale;
    let mut kappa_max: f64 = 0.0;
    for d in &dirs {
        // Bracket the boundary along witness + t d.
        let mut t0 = 0.0;
        let mut t1 = 0.0;
        let step = 0.05 * scale;
        let mut found = false;
        while t1 < 2.0 * diag {
            t1 += step;
            let p: Vec<f64> = (0..n).map(|i| witness[i] + t1 * d[i]).collect();
            let s = sd(&p);
            if !s.is_finite() {
                break;
            }
            if s >= 0.0 {
                found = true;
                break;
            }
            t0 = t1;
        }
        if !found {
            continue;
        }
        for _ in 0..60 {
            let tm = 0.5 * (t0 + t1);
            let p: Vec<f64> = (0..n).map(|i| witness[i] + tm * d[i]).collect();
            if sd(&p) < 0.0 {
                t0 = tm;
            } else {
                t1 = tm;
            }
        }
        let b: Vec<f64> = (0..n)
            .map(|i| witness[i] + 0.5 * (t0 + t1) * d[i])
            .collect();
        // FD Hessian of sd at b; max |eigenvalue| ~ max principal curvature.
        let mut hess = nalgebra::DMatrix::zeros(n, n);
        let mut ok = true;
        for i in 0..n {
            for j in i..n {
                let mut pp = b.clone();
                pp[i] += h;
                pp[j] += h;
                let mut pm = b.clone();
                pm[i] += h;
                pm[j] -= h;
                let mut mp = b.clone();
                mp[i] -= h;
                mp[j] += h;
                let mut mm = b.clone();
                mm[i] -= h;
                mm[j] -= h;
                let v = (sd(&pp) - sd(&pm) - sd(&mp) + sd(&mm)) / (4.0 * h * h);
                if !v.is_finite() {
                    ok = false;
                }
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        if !ok {
            continue;
        }
        for ev in hess.symmetric_eigenvalues().iter() {
            kappa_max = kappa_max.max(ev.abs());
        }
    }
    if kappa_max > 1e-9 {
        1.0 / kappa_max
    } else {
        f64::INFINITY
    }
}

/// Deterministic direction sets: uniform angles (n=2), Fibonacci sphere
/// (n=3), seeded Gaussian otherwise.
pub fn sphere_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut out = Vec::with_capacity(count);
    match n {
        1 => {
            out.push(vec![1.0]);
            out.push(vec![-1.0]);
        }
        2 => {
            for k in 0..count {
                // Offset avoids exact axis alignment.
                let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.37) / count as f64;
                out.push(vec![th.cos(), th.sin()]);
            }
        }
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..count {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let th = golden * k as f64;
                out.push(vec![r * th.cos(), r * th.sin(), z]);
            }
        }
        _ => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9E37_79B9);
            for _ in 0..count {
                loop {
                    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let nn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if nn > 1e-3 {
                        out.push(v.iter().map(|x| x / nn).collect());
                        break;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk() -> Domain {
        Domain::from_json(r#"{"dim":2,"shape":"ball","params":{"center":[0,0],"radius":1.0}}"#)
            .unwrap()
    }

    #[test]
    fn disk_calibration() {
        let d = disk();
        assert!((d.inradius_est - 1.0).abs() < 1e-9);
        assert!(d.witness.iter().all(|v| v.abs() < 1e-6));
        assert!((d.collar_width - 0.4).abs() < 1e-8);
        assert!((d.reach_est - 1.0).abs() < 1e-3);
        assert!((d.d0_default - 0.2).abs() < 1e-8, "d0 {}", d.d0_default);
    }

    #[test]
    fn unknown_fields_rejected() {
        let r = Domain::from_json(
            r#"{"dim":2,"shape":"ball","params":{"center":[0,0],"radius":1.0,"spin":3}}"#,
        );
        assert!(r.is_err());
        let r2 = Domain::from_json(
            r#"{"dim":2,"shape":"ball","params":{"center":[0,0],"radius":1.0},"extra":1}"#,
        );
        assert!(r2.is_err());
    }

    #[test]
    fn dist_grad_points_inward() {
        let d = disk();
        let (dist, g) = d.dist_grad(&[0.6, 0.0]).unwrap();
        assert!((dist - 0.4).abs() < 1e-12);
        assert!((g[0] + 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
    }
}
