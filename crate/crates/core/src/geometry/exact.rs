//! Shapes with closed-form Euclidean signed distance: ball and smoothed box.
//!
//! Both formulas are exact SDFs (|grad| = 1 away from the medial axis), so
//! boundary projection is a single step q - sd * grad(sd).

use super::{GeomError, Projection, ShapeKernel};

pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl ShapeKernel for Ball {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn signed_dist(&self, q: &[f64]) -> Result<f64, GeomError> {
        let r2: f64 = q
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        Ok(r2.sqrt() - self.radius)
    }

    fn project(&self, q: &[f64]) -> Result<Projection, GeomError> {
        let n = self.dim();
        let mut u: Vec<f64> = q.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let rho = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rho < 1e-14 {
            // Center: every direction is nearest; pick a fixed one.
            u = vec![0.0; n];
            u[0] = 1.0;
        } else {
            for v in u.iter_mut() {
                *v /= rho;
            }
        }
        let point: Vec<f64> = self
            .center
            .iter()
            .zip(&u)
            .map(|(c, d)| c + self.radius * d)
            .collect();
        Ok(Projection {
            point,
            normal: u,
            dist: (rho - self.radius).abs(),
            inside: rho < self.radius,
        })
    }

    fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.center.iter().map(|c| c - self.radius).collect();
        let hi = self.center.iter().map(|c| c + self.radius).collect();
        (lo, hi)
    }

    fn interior_depth_bound(&self, q: &[f64]) -> f64 {
        (-self.signed_dist(q).unwrap_or(0.0)).max(0.0)
    }
}

/// Axis-aligned box with half-widths `hw`, corners rounded to radius `rho`:
/// the Minkowski sum of the shrunken box (hw - rho) with a rho-ball.
pub struct SmoothedBox {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub corner_radius: f64,
}

impl SmoothedBox {
    /// Exact SDF and its gradient (unit away from seams and medial axis).
    fn sd_grad(&self, q: &[f64]) -> (f64, Vec<f64>) {
        let n = self.dim();
        let mut w = vec![0.0; n];
        let mut sgn = vec![1.0; n];
        for i in 0..n {
            let d = q[i] - self.center[i];
            sgn[i] = if d < 0.0 { -1.0 } else { 1.0 };
            w[i] = d.abs() - (self.half_widths[i] - self.corner_radius);
        }
        let mut out2 = 0.0;
        let mut wmax = f64::NEG_INFINITY;
        let mut imax = 0;
        for i in 0..n {
            if w[i] > 0.0 {
                out2 += w[i] * w[i];
            }
            if w[i] > wmax {
                wmax = w[i];
                imax = i;
            }
        }
        let mut g = vec![0.0; n];
        let sd;
        if out2 > 0.0 {
            let onorm = out2.sqrt();
            sd = onorm - self.corner_radius;
            for i in 0..n {
                if w[i] > 0.0 {
                    g[i] = sgn[i] * w[i] / onorm;
                }
            }
        } else {
            sd = wmax - self.corner_radius;
            g[imax] = sgn[imax];
        }
        (sd, g)
    }
}

impl ShapeKernel for SmoothedBox {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn signed_dist(&self, q: &[f64]) -> Result<f64, GeomError> {
        Ok(self.sd_grad(q).0)
    }

    fn project(&self, q: &[f64]) -> Result<Projection, GeomError> {
        let (sd, g) = self.sd_grad(q);
        let point: Vec<f64> = q.iter().zip(&g).map(|(a, gi)| a - sd * gi).collect();
        Ok(Projection {
            point,
            normal: g,
            dist: sd.abs(),
            inside: sd < 0.0,
        })
    }

    fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self
            .center
            .iter()
            .zip(&self.half_widths)
            .map(|(c, h)| c - h)
            .collect();
        let hi = self
            .center
            .iter()
            .zip(&self.half_widths)
            .map(|(c, h)| c + h)
            .collect();
        (lo, hi)
    }

    fn interior_depth_bound(&self, q: &[f64]) -> f64 {
        (-self.sd_grad(q).0).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_sd_and_projection() {
        let b = Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        assert_eq!(b.signed_dist(&[0.0, 0.0]).unwrap(), -1.0);
        assert_eq!(b.signed_dist(&[2.0, 0.0]).unwrap(), 1.0);
        let p = b.project(&[0.5, 0.0]).unwrap();
        assert!((p.point[0] - 1.0).abs() < 1e-15 && p.point[1].abs() < 1e-15);
        assert!((p.normal[0] - 1.0).abs() < 1e-15);
        assert!(p.inside);
    }

    #[test]
    fn box_sd_matches_corner_geometry() {
        let bx = SmoothedBox {
            center: vec![0.0, 0.0],
            half_widths: vec![2.0, 1.0],
            corner_radius: 0.2,
        };
        // Center: nearest facet is y = +-1.
        assert!((bx.signed_dist(&[0.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
        // Outside past the corner arc center (1.8, 0.8): distance to the arc.
        let q = [2.5, 1.5];
        let d = ((2.5f64 - 1.8).powi(2) + (1.5f64 - 0.8).powi(2)).sqrt() - 0.2;
        assert!((bx.signed_dist(&q).unwrap() - d).abs() < 1e-14);
        // Projection from a facet-adjacent interior point.
        let p = bx.project(&[0.3, 0.4]).unwrap();
        assert!((p.point[1] - 1.0).abs() < 1e-14 && (p.point[0] - 0.3).abs() < 1e-14);
        assert!((p.normal[1] - 1.0).abs() < 1e-14);
    }
}
