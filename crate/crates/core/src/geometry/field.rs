//! Implicit-field shapes: metaball unions and a two-bulb dumbbell.
//!
//! These are defined by a smooth field phi (negative inside), not by a
//! distance function. Boundary distance comes from projecting onto
//! {phi = 0}: first-order level-set steps walk a seed near the boundary,
//! then a KKT Newton solve of the nearest-point system polishes to machine
//! precision. Where the field gradient vanishes (bulb centers, blend
//! plateaus) the seed comes from bisected ray probes instead.

use crate::linalg::solve_dense;

use super::{GeomError, Projection, ShapeKernel};

/// Smooth scalar field with analytic derivatives; phi < 0 strictly inside.
pub trait ImplicitField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, q: &[f64]) -> f64;
    fn grad(&self, q: &[f64], out: &mut [f64]);
    /// Row-major n x n Hessian.
    fn hess(&self, q: &[f64], out: &mut [f64]);
    fn bbox(&self) -> (Vec<f64>, Vec<f64>);
    /// Cheap lower bound on boundary distance for interior points (0 = unknown).
    fn depth_bound(&self, q: &[f64]) -> f64;
}

// ---------------------------------------------------------------------------
// Metaball union: Wyvill-kernel blobs.
// ---------------------------------------------------------------------------

/// Sum of C^2 compact-support kernels b*(1 - |q-c|^2/R^2)^3 against a fixed
/// iso level 1/2. R is chosen per ball so that an isolated ball's zero level
/// sits exactly at the requested radius.
pub struct MetaballUnion {
    pub centers: Vec<Vec<f64>>,
    pub supports: Vec<f64>,
    pub blends: Vec<f64>,
    pub radii: Vec<f64>,
    dim: usize,
}

pub const METABALL_ISO: f64 = 0.5;

impl MetaballUnion {
    pub fn new(dim: usize, balls: &[(Vec<f64>, f64, f64)]) -> Result<Self, GeomError> {
        let mut centers = Vec::new();
        let mut supports = Vec::new();
        let mut blends = Vec::new();
        let mut radii = Vec::new();
        for (c, r, b) in balls {
            if *r <= 0.0 || *b <= 0.0 {
                return Err(GeomError::BadSpec(
                    "metaball radius and blend must be positive".into(),
                ));
            }
            // Support radius R with b*(1 - r^2/R^2)^3 = iso at |q-c| = r.
            // Requires b > iso, else the isolated ball is empty; keep the
            // ball anyway (unions may still cross iso) with R = 2r fallback.
            let ratio = (METABALL_ISO / b).powf(1.0 / 3.0);
            let support = if ratio < 1.0 {
                r / (1.0 - ratio).sqrt()
            } else {
                2.0 * r
            };
            centers.push(c.clone());
            supports.push(support);
            blends.push(*b);
            radii.push(*r);
        }
        Ok(Self {
            centers,
            supports,
            blends,
            radii,
            dim,
        })
    }
}

impl ImplicitField for MetaballUnion {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, q: &[f64]) -> f64 {
        let mut f = 0.0;
        for (k, c) in self.centers.iter().enumerate() {
            let r2: f64 = q.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            let u = r2 / (self.supports[k] * self.supports[k]);
            if u < 1.0 {
                f += self.blends[k] * (1.0 - u).powi(3);
            }
        }
        METABALL_ISO - f
    }

    fn grad(&self, q: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, c) in self.centers.iter().enumerate() {
            let s2 = self.supports[k] * self.supports[k];
            let r2: f64 = q.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            let u = r2 / s2;
            if u < 1.0 {
                let w = 6.0 * self.blends[k] * (1.0 - u) * (1.0 - u) / s2;
                for i in 0..self.dim {
                    out[i] += w * (q[i] - c[i]);
                }
            }
        }
    }

    fn hess(&self, q: &[f64], out: &mut [f64]) {
        let n = self.dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, c) in self.centers.iter().enumerate() {
            let s2 = self.supports[k] * self.supports[k];
            let r2: f64 = q.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            let u = r2 / s2;
            if u < 1.0 {
                let w1 = 6.0 * self.blends[k] * (1.0 - u) * (1.0 - u) / s2;
                let w2 = 24.0 * self.blends[k] * (1.0 - u) / (s2 * s2);
                for i in 0..n {
                    out[i * n + i] += w1;
                    for j in 0..n {
                        out[i * n + j] -= w2 * (q[i] - c[i]) * (q[j] - c[j]);
                    }
                }
            }
        }
    }

    fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for (k, c) in self.centers.iter().enumerate() {
            for i in 0..n {
                lo[i] = lo[i].min(c[i] - self.supports[k]);
                hi[i] = hi[i].max(c[i] + self.supports[k]);
            }
        }
        (lo, hi)
    }

    /// Field is Lipschitz with constant sum_k 1.717 b_k / R_k (max of the
    /// kernel's radial derivative), so dist >= -phi / L.
    fn depth_bound(&self, q: &[f64]) -> f64 {
        let phi = self.eval(q);
        if phi >= 0.0 {
            return 0.0;
        }
        let lip: f64 = self
            .blends
            .iter()
            .zip(&self.supports)
            .map(|(b, s)| 1.7176 * b / s)
            .sum();
        (-phi / lip).max(0.0)
    }
}

// ---------------------------------------------------------------------------
// Dumbbell: exponential smooth-min of two balls and a smoothed neck cylinder.
// ---------------------------------------------------------------------------

/// Two bulbs joined by a neck of half-width `neck_radius` along the segment
/// between the centers. phi = -k ln(sum exp(-sd_i/k)) over the two ball SDFs
/// and a smoothed segment-cylinder SDF; k is the blend length.
pub struct Dumbbell {
    pub centers: [Vec<f64>; 2],
    pub radii: [f64; 2],
    pub neck_radius: f64,
    pub smoothing: f64,
    axis: Vec<f64>,
    axis_len: f64,
    dim: usize,
}

impl Dumbbell {
    pub fn new(
        dim: usize,
        centers: [Vec<f64>; 2],
        radii: [f64; 2],
        neck_radius: f64,
        smoothing: Option<f64>,
    ) -> Result<Self, GeomError> {
        if radii[0] <= 0.0 || radii[1] <= 0.0 || neck_radius <= 0.0 {
            return Err(GeomError::BadSpec(
                "dumbbell radii and neck_radius must be positive".into(),
            ));
        }
        let mut axis: Vec<f64> = centers[1]
            .iter()
            .zip(&centers[0])
            .map(|(a, b)| a - b)
            .collect();
        let axis_len = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        if axis_len < 1e-12 {
            return Err(GeomError::BadSpec("dumbbell centers coincide".into()));
        }
        for v in axis.iter_mut() {
            *v /= axis_len;
        }
        let k = smoothing.unwrap_or(0.1 * radii[0].min(radii[1]));
        Ok(Self {
            centers,
            radii,
            neck_radius,
            smoothing: k,
            axis,
            axis_len,
            dim,
        })
    }

    /// Component SDFs and their first/second derivatives at q.
    /// Index 0,1: balls; 2: smoothed neck cylinder around the center segment.
    fn parts(&self, q: &[f64], want_hess: bool) -> [Part; 3] {
        let n = self.dim;
        let mut out: [Part; 3] = [Part::new(n), Part::new(n), Part::new(n)];
        for b in 0..2 {
            let c = &self.centers[b];
            let mut u: Vec<f64> = q.iter().zip(c).map(|(a, x)| a - x).collect();
            let rho = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let p = &mut out[b];
            if rho < 1e-12 {
                // Exactly at a center: value is fine, derivatives are set to
                // zero; callers treat a tiny total gradient as "flat region".
                p.sd = -self.radii[b];
                continue;
            }
            for v in u.iter_mut() {
                *v /= rho;
            }
            p.sd = rho - self.radii[b];
            p.grad.copy_from_slice(&u);
            if want_hess {
                for i in 0..n {
                    for j in 0..n {
                        let mut h = -u[i] * u[j] / rho;
                        if i == j {
                            h += 1.0 / rho;
                        }
                        p.hess[i * n + j] = h;
                    }
                }
            }
        }
        // Smoothed cylinder around the segment [c0, c1]: with d = distance
        // to the segment, sd = sqrt(d^2 + s^2) - sqrt(neck^2 + s^2). The s
        // regularization removes the axis kink; the zero level still sits
        // exactly at d = neck_radius.
        {
            let s = self.smoothing;
            let c0 = &self.centers[0];
            let mut rel: Vec<f64> = q.iter().zip(c0).map(|(a, x)| a - x).collect();
            let t: f64 = rel.iter().zip(&self.axis).map(|(a, b)| a * b).sum();
            let tc = t.clamp(0.0, self.axis_len);
            // v = q - (c0 + tc*axis), d^2 = |v|^2
            for i in 0..self.dim {
                rel[i] -= tc * self.axis[i];
            }
            let d2: f64 = rel.iter().map(|v| v * v).sum();
            let m = (d2 + s * s).sqrt();
            let p = &mut out[2];
            p.sd = m - (self.neck_radius * self.neck_radius + s * s).sqrt();
            // rel is perpendicular to the axis on the interior branch and the
            // full offset on the clamped ones, so grad = rel/m either way.
            let interior = t > 0.0 && t < self.axis_len;
            for i in 0..self.dim {
                p.grad[i] = rel[i] / m;
            }
            if want_hess {
                // H = (P - g g') / m with P the projector used above.
                let n = self.dim;
                for i in 0..n {
                    for j in 0..n {
                        let mut pij = if i == j { 1.0 } else { 0.0 };
                        if interior {
                            pij -= self.axis[i] * self.axis[j];
                        }
                        p.hess[i * n + j] = (pij - p.grad[i] * p.grad[j]) / m;
                    }
                }
            }
        }
        out
    }

    fn weights(&self, parts: &[Part; 3]) -> [f64; 3] {
        let k = self.smoothing;
        let mn = parts.iter().map(|p| p.sd).fold(f64::INFINITY, f64::min);
        let mut w = [0.0; 3];
        let mut tot = 0.0;
        for (i, p) in parts.iter().enumerate() {
            w[i] = (-(p.sd - mn) / k).exp();
            tot += w[i];
        }
        for v in w.iter_mut() {
            *v /= tot;
        }
        w
    }

    fn smin(&self, parts: &[Part; 3]) -> f64 {
        let k = self.smoothing;
        let mn = parts.iter().map(|p| p.sd).fold(f64::INFINITY, f64::min);
        let sum: f64 = parts.iter().map(|p| (-(p.sd - mn) / k).exp()).sum();
        mn - k * sum.ln()
    }
}

struct Part {
    sd: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl Part {
    fn new(n: usize) -> Self {
        Self {
            sd: 0.0,
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
        }
    }
}

impl ImplicitField for Dumbbell {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, q: &[f64]) -> f64 {
        self.smin(&self.parts(q, false))
    }

    fn grad(&self, q: &[f64], out: &mut [f64]) {
        let parts = self.parts(q, false);
        let w = self.weights(&parts);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, p) in parts.iter().enumerate() {
            for d in 0..self.dim {
                out[d] += w[i] * p.grad[d];
            }
        }
    }

    fn hess(&self, q: &[f64], out: &mut [f64]) {
        let n = self.dim;
        let parts = self.parts(q, true);
        let w = self.weights(&parts);
        let mut g = vec![0.0; n];
        for (i, p) in parts.iter().enumerate() {
            for d in 0..n {
                g[d] += w[i] * p.grad[d];
            }
        }
        // H = sum w_i H_i - (1/k)[sum w_i g_i g_i' - g g']
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, p) in parts.iter().enumerate() {
            for a in 0..n {
                for b in 0..n {
                    out[a * n + b] += w[i] * p.hess[a * n + b]
                        - w[i] * p.grad[a] * p.grad[b] / self.smoothing;
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                out[a * n + b] += g[a] * g[b] / self.smoothing;
            }
        }
    }

    fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for b in 0..2 {
            for i in 0..n {
                lo[i] = lo[i].min(self.centers[b][i] - self.radii[b] - self.smoothing);
                hi[i] = hi[i].max(self.centers[b][i] + self.radii[b] + self.smoothing);
            }
        }
        (lo, hi)
    }

    /// smin is within k ln 3 below the true min of the part SDFs, and each
    /// part underestimates its primitive's inscribed depth, so
    /// dist >= -phi - k ln 3.
    fn depth_bound(&self, q: &[f64]) -> f64 {
        let phi = self.eval(q);
        (-phi - self.smoothing * 3f64.ln()).max(0.0)
    }
}

// ---------------------------------------------------------------------------
// ShapeKernel adapter: KKT projection onto {phi = 0}.
// ---------------------------------------------------------------------------

pub struct FieldShape<F: ImplicitField> {
    pub field: F,
    /// Median |grad phi| on the boundary, learned on first use: the yard-
    /// stick that detects degenerate-gradient regions (bulb axes, blend
    /// plateaus) where first-order level-set stepping overshoots onto the
    /// wrong boundary branch.
    grad_scale: std::sync::OnceLock<f64>,
}

impl<F: ImplicitField> FieldShape<F> {
    pub fn new(field: F) -> Self {
        Self {
            field,
            grad_scale: std::sync::OnceLock::new(),
        }
    }

    fn bbox_diag(&self) -> f64 {
        let (lo, hi) = self.field.bbox();
        lo.iter()
            .zip(&hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    fn grad_scale(&self) -> f64 {
        *self.grad_scale.get_or_init(|| {
            let n = self.field.dim();
            let (lo, hi) = self.field.bbox();
            let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let mut mags = Vec::new();
            let mut g = vec![0.0; n];
            for d in super::sphere_directions(n, 2 * n + 6) {
                if let Some(hit) = self.probe_ray(&center, &d) {
                    self.field.grad(&hit, &mut g);
                    mags.push(g.iter().map(|v| v * v).sum::<f64>().sqrt());
                }
            }
            if mags.is_empty() {
                return 1.0;
            }
            mags.sort_by(f64::total_cmp);
            mags[mags.len() / 2].max(1e-9)
        })
    }

    /// March from `from` along `dir` to a sign change of phi, bisected.
    fn probe_ray(&self, from: &[f64], dir: &[f64]) -> Option<Vec<f64>> {
        let n = self.field.dim();
        let diag = self.bbox_diag();
        let phi0 = self.field.eval(from);
        let step = 0.02 * diag;
        let mut t_prev = 0.0;
        let mut t = 0.0;
        let mut bracket = None;
        for _ in 0..200 {
            t += step;
            let p: Vec<f64> = (0..n).map(|i| from[i] + t * dir[i]).collect();
            if self.field.eval(&p).signum() != phi0.signum() {
                bracket = Some((t_prev, t));
                break;
            }
            t_prev = t;
            if t > 1.5 * diag {
                break;
            }
        }
        let (mut a, mut b) = bracket?;
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            let p: Vec<f64> = (0..n).map(|i| from[i] + m * dir[i]).collect();
            if self.field.eval(&p).signum() == phi0.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        Some((0..n).map(|i| from[i] + 0.5 * (a + b) * dir[i]).collect())
    }

    /// First-order level-set walk toward the boundary. Returns None when an
    /// iterate's gradient drops below a quarter of the boundary scale or a
    /// step cannot reduce |phi|: both symptoms mean the walk is about to
    /// overshoot onto a far branch, and the caller should fall back to the
    /// bisected ray probes.
    fn walk_seed(&self, q: &[f64]) -> Option<Vec<f64>> {
        let n = self.field.dim();
        let diag = self.bbox_diag();
        let gmin = 0.25 * self.grad_scale();
        let mut y = q.to_vec();
        let mut g = vec![0.0; n];
        let mut phi = self.field.eval(&y);
        for _ in 0..30 {
            self.field.grad(&y, &mut g);
            let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn < gmin {
                return None;
            }
            if phi.abs() < 1e-9 * gn * diag {
                return Some(y);
            }
            let mut step = phi / (gn * gn);
            // Clamp: a single level-set step should never cross the domain.
            let max_len = 0.25 * diag;
            if step.abs() * gn > max_len {
                step = step.signum() * max_len / gn;
            }
            // Halve until |phi| decreases, keeping the walk inside the range
            // where the linearization is honest.
            let mut accepted = false;
            for _ in 0..8 {
                let yt: Vec<f64> = (0..n).map(|i| y[i] - step * g[i]).collect();
                let pt = self.field.eval(&yt);
                if pt.abs() < phi.abs() {
                    y = yt;
                    phi = pt;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        self.field.grad(&y, &mut g);
        let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        (phi.abs() < 1e-6 * gn.max(gmin) * diag).then_some(y)
    }

    /// Nearest bisected ray-probe hit over axis plus oblique directions.
    fn probe_seed(&self, q: &[f64]) -> Option<Vec<f64>> {
        let n = self.field.dim();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut d = vec![0.0; n];
                d[i] = s;
                dirs.push(d);
            }
        }
        // A few fixed oblique directions for coverage.
        for k in 0..4 {
            let mut d: Vec<f64> = (0..n)
                .map(|i| ((1 + i + 2 * k) as f64 * 0.707).sin())
                .collect();
            let nn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nn > 1e-9 {
                for v in d.iter_mut() {
                    *v /= nn;
                }
                dirs.push(d);
            }
        }
        for d in &dirs {
            if let Some(hit) = self.probe_ray(q, d) {
                let dist2: f64 = hit.iter().zip(q).map(|(x, z)| (x - z) * (x - z)).sum();
                if best.as_ref().map_or(true, |(bd, _)| dist2 < *bd) {
                    best = Some((dist2, hit));
                }
            }
        }
        best.map(|(_, p)| p)
    }

    /// Pull a point near the boundary back onto phi = 0 by 1-D level-set
    /// steps along the gradient.
    fn snap_to_surface(&self, y: &mut [f64]) -> bool {
        let n = self.field.dim();
        let diag = self.bbox_diag();
        let mut g = vec![0.0; n];
        for _ in 0..20 {
            let phi = self.field.eval(y);
            self.field.grad(y, &mut g);
            let g2: f64 = g.iter().map(|v| v * v).sum();
            let gn = g2.sqrt();
            if gn < 1e-14 {
                return false;
            }
            if phi.abs() <= 1e-14 * gn * diag {
                return true;
            }
            for i in 0..n {
                y[i] -= phi / g2 * g[i];
            }
        }
        let phi = self.field.eval(y);
        self.field.grad(y, &mut g);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        gn > 1e-14 && phi.abs() <= 1e-11 * gn * diag
    }

    /// Projected-gradient descent of |y - q|^2 along the boundary surface:
    /// step against the tangential component of y - q, then snap back onto
    /// phi = 0. Monotone in the distance, so it cannot leave the basin —
    /// the workhorse for queries near the medial axis where the Newton
    /// iteration on the optimality system is ill-conditioned.
    fn surface_descent(&self, q: &[f64], mut y: Vec<f64>) -> Option<Vec<f64>> {
        let n = self.field.dim();
        let len_scale = 1.0 + q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut g = vec![0.0; n];
        let dist2 = |y: &[f64]| -> f64 { y.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum() };
        let mut d2 = dist2(&y);
        for _ in 0..600 {
            self.field.grad(&y, &mut g);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn < 1e-14 {
                return None;
            }
            // Tangential part of y - q.
            let along: f64 = (0..n).map(|i| (y[i] - q[i]) * g[i] / gn).sum();
            let t: Vec<f64> = (0..n).map(|i| (y[i] - q[i]) - along * g[i] / gn).collect();
            let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if tn <= 1e-12 * len_scale {
                return Some(y);
            }
            let mut eta = 1.0;
            let mut moved = false;
            for _ in 0..10 {
                let mut yt: Vec<f64> = (0..n).map(|i| y[i] - eta * t[i]).collect();
                if self.snap_to_surface(&mut yt) {
                    let d2t = dist2(&yt);
                    if d2t < d2 {
                        y = yt;
                        d2 = d2t;
                        moved = true;
                        break;
                    }
                }
                eta *= 0.5;
            }
            if !moved {
                // Cannot decrease further: accept if the tangential residual
                // is already small in length units.
                return (tn <= 1e-9 * len_scale).then_some(y);
            }
        }
        let _ = d2;
        None
    }

    /// Newton iteration on the nearest-point conditions
    ///   y - q + lam * grad(y) = 0,  phi(y) = 0
    /// from a boundary seed. Iterates are confined to the ball around q
    /// through the seed — the nearest point can be no farther, and without
    /// that cap the iteration can wander into the basin of a far-side
    /// critical point of the distance. Returns (y, grad at y, lam).
    fn kkt_from(&self, q: &[f64], y0: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let n = self.field.dim();
        let diag = self.bbox_diag();
        let len_scale = 1.0 + q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tol = 1e-13 * len_scale;
        let d0: f64 = y0
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let r_max = 1.05 * d0 + 1e-9 * (1.0 + diag);

        let mut y = y0;
        let mut g = vec![0.0; n];
        self.field.grad(&y, &mut g);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut lam = if g2 > 0.0 {
            (0..n).map(|i| (q[i] - y[i]) * g[i]).sum::<f64>() / g2
        } else {
            0.0
        };
        let mut hp = vec![0.0; n * n];
        let mut a = vec![0.0; (n + 1) * (n + 1)];
        let mut b = vec![0.0; n + 1];
        // Residual in length units: |phi|/|g| folds the level-set offset
        // into a distance so the tolerance is uniform across field scalings.
        let kkt_res = |y: &[f64], g: &[f64], lam: f64, phi: f64| -> f64 {
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
            let mut r2 = 0.0;
            for i in 0..y.len() {
                let ri = y[i] - q[i] + lam * g[i];
                r2 += ri * ri;
            }
            r2.sqrt() + phi.abs() / gn
        };
        let mut phi = self.field.eval(&y);
        let mut r = kkt_res(&y, &g, lam, phi);
        for _ in 0..80 {
            if r <= tol {
                let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if gn < 1e-14 {
                    return None;
                }
                return Some((y, g, lam));
            }
            self.field.hess(&y, &mut hp);
            a.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                for j in 0..n {
                    a[i * (n + 1) + j] = lam * hp[i * n + j];
                }
                a[i * (n + 1) + i] += 1.0;
                a[i * (n + 1) + n] = g[i];
                a[n * (n + 1) + i] = g[i];
                b[i] = -(y[i] - q[i] + lam * g[i]);
            }
            b[n] = -phi;
            if !solve_dense(n + 1, &mut a, &mut b) {
                return None;
            }
            let mut step = 1.0;
            let mut improved = false;
            for _ in 0..12 {
                let yt: Vec<f64> = (0..n).map(|i| y[i] + step * b[i]).collect();
                let dt: f64 = yt
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dt > r_max {
                    step *= 0.5;
                    continue;
                }
                let lt = lam + step * b[n];
                let mut gt = vec![0.0; n];
                self.field.grad(&yt, &mut gt);
                let pt = self.field.eval(&yt);
                let rt = kkt_res(&yt, &gt, lt, pt);
                if rt < r {
                    y = yt;
                    lam = lt;
                    g = gt;
                    phi = pt;
                    r = rt;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                return None;
            }
        }
        None
    }
}

impl<F: ImplicitField> ShapeKernel for FieldShape<F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn signed_dist(&self, q: &[f64]) -> Result<f64, GeomError> {
        let p = self.project(q)?;
        Ok(if p.inside { -p.dist } else { p.dist })
    }

    fn project(&self, q: &[f64]) -> Result<Projection, GeomError> {
        let inside = self.field.eval(q) < 0.0;
        let diag = self.bbox_diag();
        // Multiplier sign must match the side of the boundary q is on
        // (positive outside, negative inside); a converged solution with the
        // wrong sign is a far-side critical point of the distance, so the
        // probes get a chance to supply a better seed.
        let attempt = |y0: Vec<f64>| -> Option<(Vec<f64>, Vec<f64>, f64)> {
            let (y, g, lam) = self.kkt_from(q, y0)?;
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let slack = 1e-9 * (1.0 + diag) / gn;
            let ok = if inside { lam <= slack } else { lam >= -slack };
            ok.then_some((y, g, lam))
        };
        let sol = self
            .walk_seed(q)
            .and_then(&attempt)
            .or_else(|| self.probe_seed(q).and_then(&attempt))
            .or_else(|| {
                // Near the medial axis the Newton iteration stalls; fall back
                // to monotone surface descent from the best seed, then polish.
                let y0 = self.walk_seed(q).or_else(|| self.probe_seed(q))?;
                let yd = self.surface_descent(q, y0)?;
                attempt(yd.clone()).or_else(|| {
                    let n = self.field.dim();
                    let mut g = vec![0.0; n];
                    self.field.grad(&yd, &mut g);
                    let g2: f64 = g.iter().map(|v| v * v).sum();
                    let gn = g2.sqrt();
                    if gn < 1e-14 {
                        return None;
                    }
                    let lam: f64 = (0..n).map(|i| (q[i] - yd[i]) * g[i]).sum::<f64>() / g2;
                    let slack = 1e-9 * (1.0 + diag) / gn;
                    let ok = if inside { lam <= slack } else { lam >= -slack };
                    ok.then_some((yd, g, lam))
                })
            });
        let Some((y, g, _lam)) = sol else {
            return Err(GeomError::ProjectionFailure { point: q.to_vec() });
        };
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let normal: Vec<f64> = g.iter().map(|v| v / gn).collect();
        let dist = y
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok(Projection {
            point: y,
            normal,
            dist,
            inside,
        })
    }

    fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        self.field.bbox()
    }

    fn interior_depth_bound(&self, q: &[f64]) -> f64 {
        self.field.depth_bound(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_metaball_boundary_at_radius() {
        let m = MetaballUnion::new(2, &[(vec![0.0, 0.0], 1.0, 1.0)]).unwrap();
        assert!(m.eval(&[1.0, 0.0]).abs() < 1e-12);
        assert!(m.eval(&[0.0, 0.0]) < 0.0);
        assert!(m.eval(&[1.5, 0.0]) > 0.0);
    }

    #[test]
    fn metaball_projection_matches_radial_geometry() {
        let s = FieldShape::new(MetaballUnion::new(2, &[(vec![0.0, 0.0], 1.0, 1.0)]).unwrap());
        let p = s.project(&[0.4, 0.0]).unwrap();
        assert!((p.dist - 0.6).abs() < 1e-10, "dist {}", p.dist);
        assert!((p.point[0] - 1.0).abs() < 1e-10);
        assert!(p.inside);
    }

    #[test]
    fn dumbbell_field_gradient_fd() {
        let d = Dumbbell::new(
            2,
            [vec![-1.4, 0.0], vec![1.4, 0.0]],
            [1.0, 1.0],
            0.2,
            None,
        )
        .unwrap();
        let pts = [[-0.9, 0.3], [0.0, 0.15], [1.9, 0.4], [-0.4, -0.18]];
        for q in pts {
            let mut g = vec![0.0, 0.0];
            d.grad(&q, &mut g);
            let h = 1e-6;
            for i in 0..2 {
                let mut qp = q;
                qp[i] += h;
                let mut qm = q;
                qm[i] -= h;
                let fd = (d.eval(&qp) - d.eval(&qm)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7, "q {q:?} comp {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn dumbbell_projection_from_bulb_center() {
        let s = FieldShape::new(
            Dumbbell::new(
                2,
                [vec![-1.4, 0.0], vec![1.4, 0.0]],
                [1.0, 1.0],
                0.2,
                None,
            )
            .unwrap(),
        );
        // Bulb center: field gradient vanishes, ray probes must kick in.
        let p = s.project(&[-1.4, 0.0]).unwrap();
        assert!(p.inside);
        assert!((p.dist - 1.0).abs() < 2e-2, "bulb depth {}", p.dist);
    }
}
