//! Ellipsoid boundary distance via the nearest-point KKT system.
//!
//! For phi(y) = sum((y_i - c_i)/a_i)^2 - 1, the nearest boundary point from q
//! solves y - q + lambda * grad(phi)(y) = 0, phi(y) = 0. Newton converges
//! quadratically but the system has up to 2n critical points (boundary
//! critical points of the distance), and the naive scaled-sphere seed lands
//! on a distance *saddle* for interior points near the long axes. Seeding
//! from the scaled point plus every axis pole and keeping the closest
//! converged candidate makes the result the true minimum.

use crate::linalg::solve_dense;

use super::{GeomError, Projection, ShapeKernel};

pub struct Ellipsoid {
    pub center: Vec<f64>,
    pub semi_axes: Vec<f64>,
}

impl Ellipsoid {
    /// phi in centered coordinates.
    fn phi_c(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(&self.semi_axes)
            .map(|(v, a)| (v / a) * (v / a))
            .sum::<f64>()
            - 1.0
    }

    /// One damped KKT Newton run from seed `y0` (centered coords). Returns a
    /// converged boundary point or None.
    fn kkt_from(&self, u: &[f64], y0: &[f64], len_scale: f64) -> Option<Vec<f64>> {
        let n = u.len();
        let inv_a2: Vec<f64> = self.semi_axes.iter().map(|a| 1.0 / (a * a)).collect();
        let mut y = y0.to_vec();
        // lambda from the stationarity row, least squares against grad(phi).
        let grad = |y: &[f64]| -> Vec<f64> {
            y.iter().zip(&inv_a2).map(|(v, ia)| 2.0 * v * ia).collect()
        };
        let mut g = grad(&y);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut lam = if g2 > 0.0 {
            (0..n).map(|i| (u[i] - y[i]) * g[i]).sum::<f64>() / g2
        } else {
            0.0
        };
        let resid = |y: &[f64], g: &[f64], lam: f64, phi: f64| -> f64 {
            let mut r2 = 0.0;
            for i in 0..y.len() {
                let ri = y[i] - u[i] + lam * g[i];
                r2 += ri * ri;
            }
            r2 += phi * phi * len_scale * len_scale;
            r2.sqrt()
        };
        let mut phi = self.phi_c(&y);
        let mut r = resid(&y, &g, lam, phi);
        let tol = 1e-14 * len_scale;
        let mut a = vec![0.0; (n + 1) * (n + 1)];
        let mut b = vec![0.0; n + 1];
        for _ in 0..80 {
            if r <= tol {
                return Some(y);
            }
            // J = [I + lam*Hphi, grad; grad', 0], Hphi = 2 diag(inv_a2).
            a.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                a[i * (n + 1) + i] = 1.0 + lam * 2.0 * inv_a2[i];
                a[i * (n + 1) + n] = g[i];
                a[n * (n + 1) + i] = g[i];
                b[i] = -(y[i] - u[i] + lam * g[i]);
            }
            b[n] = -phi;
            if !solve_dense(n + 1, &mut a, &mut b) {
                return None;
            }
            // Backtrack on the residual norm.
            let mut step = 1.0;
            let mut improved = false;
            for _ in 0..12 {
                let yt: Vec<f64> = (0..n).map(|i| y[i] + step * b[i]).collect();
                let lt = lam + step * b[n];
                let gt = grad(&yt);
                let pt = self.phi_c(&yt);
                let rt = resid(&yt, &gt, lt, pt);
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
        if r <= tol {
            Some(y)
        } else {
            None
        }
    }
}

impl ShapeKernel for Ellipsoid {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn signed_dist(&self, q: &[f64]) -> Result<f64, GeomError> {
        Ok(self.project(q)?.dist * if self.phi_c(&centered(q, &self.center)) < 0.0 { -1.0 } else { 1.0 })
    }

    fn project(&self, q: &[f64]) -> Result<Projection, GeomError> {
        let n = self.dim();
        let u = centered(q, &self.center);
        let len_scale = 1.0 + u.iter().map(|v| v * v).sum::<f64>().sqrt();

        let mut seeds: Vec<Vec<f64>> = Vec::with_capacity(2 * n + 1);
        let uhat2: f64 = u
            .iter()
            .zip(&self.semi_axes)
            .map(|(v, a)| (v / a) * (v / a))
            .sum();
        if uhat2 > 1e-24 {
            let s = 1.0 / uhat2.sqrt();
            seeds.push(u.iter().map(|v| v * s).collect());
        }
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut p = vec![0.0; n];
                p[i] = sign * self.semi_axes[i];
                seeds.push(p);
            }
        }

        let mut best: Option<(f64, Vec<f64>)> = None;
        for s in &seeds {
            if let Some(y) = self.kkt_from(&u, s, len_scale) {
                let d2: f64 = y.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.as_ref().map_or(true, |(bd, _)| d2 < *bd) {
                    best = Some((d2, y));
                }
            }
        }
        let (d2, y) = best.ok_or_else(|| GeomError::ProjectionFailure {
            point: q.to_vec(),
        })?;
        let mut normal: Vec<f64> = y
            .iter()
            .zip(&self.semi_axes)
            .map(|(v, a)| 2.0 * v / (a * a))
            .collect();
        let nn = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in normal.iter_mut() {
            *v /= nn;
        }
        let point: Vec<f64> = y.iter().zip(&self.center).map(|(v, c)| v + c).collect();
        Ok(Projection {
            point,
            normal,
            dist: d2.sqrt(),
            inside: uhat2 < 1.0,
        })
    }

    fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self
            .center
            .iter()
            .zip(&self.semi_axes)
            .map(|(c, a)| c - a)
            .collect();
        let hi = self
            .center
            .iter()
            .zip(&self.semi_axes)
            .map(|(c, a)| c + a)
            .collect();
        (lo, hi)
    }

    /// Lipschitz bound: the scaling map y -> y/a contracts by at most
    /// 1/min(a), and the scaled boundary is the unit sphere.
    fn interior_depth_bound(&self, q: &[f64]) -> f64 {
        let u = centered(q, &self.center);
        let rho = self.phi_c(&u) + 1.0;
        let amin = self.semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
        (amin * (1.0 - rho.max(0.0).sqrt())).max(0.0)
    }
}

fn centered(q: &[f64], c: &[f64]) -> Vec<f64> {
    q.iter().zip(c).map(|(a, b)| a - b).collect()
}
