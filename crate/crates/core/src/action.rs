//! Discrete free-period action for closed loops in a penalized domain.
//!
//! A loop is N nodes G_0 .. G_{N-1} at equal parameter spacing 1/N, closed
//! cyclically and traversed in physical time tau. The action couples the
//! elastic energy of the polygon, the wall potential scaled by eps, and a
//! fixed energy level E = 1/2 that makes the period a genuine unknown:
//!
//!   A(G, tau) = (N / (2 tau)) sum_i |G_{i+1} - G_i|^2
//!             - (tau / N) sum_i eps U(G_i) + tau E
//!
//! Stationarity in the nodes is the discrete Euler-Lagrange equation
//!
//!   N^2 (G_{i+1} - 2 G_i + G_{i-1}) + tau^2 eps grad U(G_i) = 0
//!
//! and stationarity in tau pins the average energy at E, which is what
//! turns critical loops into unit-speed trajectories in the limit.
//!
//! In node-major order the Hessian is block tridiagonal with a cyclic
//! corner (node N-1 couples back to node 0) plus a dense tau row/column,
//! so it is assembled straight into [`crate::linalg::BorderedBanded`] with
//! the last node, tau, and an optional phase-constraint row as the border.
//! The same assembly with tau frozen yields the matrix whose negative
//! eigenvalue count is the index reported by [`ActionProblem::morse_index_fixed_tau`].

use crate::geometry::Domain;
use crate::linalg::BorderedBanded;
use crate::penalty::{potential, potential_grad, potential_hess, PenaltyConfig, PenaltyError};
use thiserror::Error;

/// Energy level enforced through stationarity in the free period.
pub const ENERGY_LEVEL: f64 = 0.5;

/// Spectral shift for index counting, relative to the Gershgorin bound:
/// eigenvalues in (-t, t) count as numerically zero, not negative.
pub const MORSE_SHIFT_REL: f64 = 1e-7;

/// Relative pivot floor below which the banded factorization aborts.
const PIVOT_ZERO_TOL: f64 = 1e-13;

/// Relative zero window for Schur-complement eigenvalues in inertia counts.
const SCHUR_ZERO_TOL: f64 = 1e-12;

/// Multiplicative jitters applied to the inertia shift when a pivot lands
/// on zero; generic matrices succeed on the first try.
const SHIFT_JITTERS: [f64; 5] = [1.0, 1.0 + 1e-3, 1.0 - 1e-3, 1.0 + 2e-3, 1.0 - 2e-3];

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("invalid loop: {0}")]
    InvalidLoop(&'static str),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error("banded factorization hit a zero pivot after shift jitters")]
    PivotBreakdown,
}

/// Closed polygonal loop with a free traversal period.
///
/// `points` is node-major (`node_count * dim` coordinates); node i+1 follows
/// node i, and the last node connects back to node 0.
#[derive(Debug, Clone)]
pub struct DiscreteLoop {
    points: Vec<f64>,
    pub tau: f64,
    dim: usize,
}

impl DiscreteLoop {
    pub fn new(points: Vec<f64>, tau: f64, dim: usize) -> Result<Self, ActionError> {
        if dim == 0 {
            return Err(ActionError::InvalidLoop("dimension must be positive"));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(ActionError::InvalidLoop("point buffer must hold whole nodes"));
        }
        if points.len() / dim < 3 {
            return Err(ActionError::InvalidLoop("need at least three nodes"));
        }
        if !points.iter().all(|v| v.is_finite()) {
            return Err(ActionError::InvalidLoop("non-finite coordinate"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ActionError::InvalidLoop("period must be positive and finite"));
        }
        Ok(Self { points, tau, dim })
    }

    /// Rebuild from a flat state vector `[points.., tau]`.
    pub fn from_state(dim: usize, state: &[f64]) -> Result<Self, ActionError> {
        let (tau, pts) = state
            .split_last()
            .ok_or(ActionError::InvalidLoop("empty state"))?;
        Self::new(pts.to_vec(), *tau, dim)
    }

    /// Flat state vector `[points.., tau]`.
    pub fn state(&self) -> Vec<f64> {
        let mut s = self.points.clone();
        s.push(self.tau);
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Sum of segment lengths.
    pub fn perimeter(&self) -> f64 {
        let nn = self.node_count();
        (0..nn)
            .map(|i| {
                let a = self.node(i);
                let b = self.node((i + 1) % nn);
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (y - x) * (y - x))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }

    /// Discrete integral of the squared physical velocity over one period:
    ///
    ///   int_0^tau |dG/dt|^2 dt  =  (N / tau) * sum |G_{i+1} - G_i|^2.
    ///
    /// At unit speed this equals the loop length, making it the measure
    /// used to compare branches and to bound the period.
    pub fn kinetic_integral(&self) -> f64 {
        let nn = self.node_count();
        (self.node_count() as f64 / self.tau)
            * (0..nn)
                .map(|i| {
                    let a = self.node(i);
                    let b = self.node((i + 1) % nn);
                    a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>()
                })
                .sum::<f64>()
    }

    /// Unit tangent to the reparametrization orbit: central-difference loop
    /// velocity in the node slots, zero in the tau slot. Constraining steps
    /// against this direction removes the phase-shift null mode.
    pub fn phase_tangent(&self) -> Vec<f64> {
        let (nn, n) = (self.node_count(), self.dim);
        let nf = nn as f64;
        let mut c = vec![0.0; nn * n + 1];
        for i in 0..nn {
            let prev = self.node((i + nn - 1) % nn);
            let next = self.node((i + 1) % nn);
            for k in 0..n {
                c[i * n + k] = nf * (next[k] - prev[k]) / 2.0;
            }
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut c {
                *v /= norm;
            }
        }
        c
    }

    /// Periodic linear resampling to `new_n` nodes. Parameters that land
    /// exactly on an old node copy it bit-for-bit, so doubling and halving
    /// round-trips the original nodes.
    pub fn resample(&self, new_n: usize) -> Result<Self, ActionError> {
        if new_n < 3 {
            return Err(ActionError::InvalidLoop("need at least three nodes"));
        }
        let (nn, n) = (self.node_count(), self.dim);
        let mut pts = Vec::with_capacity(new_n * n);
        for j in 0..new_n {
            let t = j as f64 * nn as f64 / new_n as f64;
            let i0 = (t.floor() as usize) % nn;
            let frac = t - t.floor();
            let a = self.node(i0);
            if frac == 0.0 {
                pts.extend_from_slice(a);
            } else {
                let b = self.node((i0 + 1) % nn);
                for k in 0..n {
                    pts.push((1.0 - frac) * a[k] + frac * b[k]);
                }
            }
        }
        Self::new(pts, self.tau, n)
    }
}

/// One penalized variational problem: the domain plus the stage's
/// saturation/strength parameters.
#[derive(Clone, Copy)]
pub struct ActionProblem<'a> {
    pub domain: &'a Domain,
    pub pen: PenaltyConfig,
}

impl<'a> ActionProblem<'a> {
    pub fn new(domain: &'a Domain, pen: PenaltyConfig) -> Self {
        Self { domain, pen }
    }

    fn check_dim(&self, lp: &DiscreteLoop) -> Result<(), ActionError> {
        if lp.dim() != self.domain.dim {
            return Err(ActionError::InvalidLoop("loop dimension != domain dimension"));
        }
        Ok(())
    }

    /// Action value.
    pub fn action(&self, lp: &DiscreteLoop) -> Result<f64, ActionError> {
        self.check_dim(lp)?;
        let (nn, n) = (lp.node_count(), lp.dim());
        let nf = nn as f64;
        let mut seg_sum = 0.0;
        let mut pot_sum = 0.0;
        for i in 0..nn {
            let cur = lp.node(i);
            let next = lp.node((i + 1) % nn);
            for k in 0..n {
                let d = next[k] - cur[k];
                seg_sum += d * d;
            }
            pot_sum += potential(self.domain, self.pen.d0, cur)?;
        }
        Ok(nf / (2.0 * lp.tau) * seg_sum - lp.tau / nf * self.pen.eps * pot_sum
            + lp.tau * ENERGY_LEVEL)
    }

    /// Gradient in state order `[nodes.., tau]`.
    pub fn grad(&self, lp: &DiscreteLoop) -> Result<Vec<f64>, ActionError> {
        self.check_dim(lp)?;
        let (nn, n) = (lp.node_count(), lp.dim());
        let (nf, tau) = (nn as f64, lp.tau);
        let mut g = vec![0.0; nn * n + 1];
        let mut seg_sum = 0.0;
        let mut pot_sum = 0.0;
        for i in 0..nn {
            let prev = lp.node((i + nn - 1) % nn);
            let cur = lp.node(i);
            let next = lp.node((i + 1) % nn);
            let (u, du) = potential_grad(self.domain, self.pen.d0, cur)?;
            pot_sum += u;
            for k in 0..n {
                g[i * n + k] = nf / tau * (2.0 * cur[k] - next[k] - prev[k])
                    - tau / nf * self.pen.eps * du[k];
                let d = next[k] - cur[k];
                seg_sum += d * d;
            }
        }
        g[nn * n] =
            -nf / (2.0 * tau * tau) * seg_sum - self.pen.eps * pot_sum / nf + ENERGY_LEVEL;
        Ok(g)
    }

    /// Full Hessian with tau free, optionally bordered by a phase row.
    ///
    /// `phase` must be a state-length direction (`node_count * dim + 1`); it
    /// lands in the last border column with a zero corner, turning solves
    /// into equality-constrained Newton steps.
    pub fn hessian(
        &self,
        lp: &DiscreteLoop,
        phase: Option<&[f64]>,
    ) -> Result<BorderedBanded, ActionError> {
        self.assemble(lp, true, phase)
    }

    /// Hessian in the node variables only, tau frozen: the matrix whose
    /// negative directions define the index of a critical loop.
    pub fn hessian_fixed_tau(&self, lp: &DiscreteLoop) -> Result<BorderedBanded, ActionError> {
        self.assemble(lp, false, None)
    }

    fn assemble(
        &self,
        lp: &DiscreteLoop,
        free_tau: bool,
        phase: Option<&[f64]>,
    ) -> Result<BorderedBanded, ActionError> {
        self.check_dim(lp)?;
        let (nn, n) = (lp.node_count(), lp.dim());
        let (nf, tau) = (nn as f64, lp.tau);
        if let Some(c) = phase {
            if c.len() != nn * n + 1 {
                return Err(ActionError::InvalidLoop("phase vector length != state length"));
            }
        }
        let m = (nn - 1) * n;
        let tau_slot = n; // border slot of tau (when free)
        let phase_slot = n + usize::from(free_tau); // border slot of the phase row
        let p = n + usize::from(free_tau) + usize::from(phase.is_some());
        let mut bb = BorderedBanded::new(m, n, p);

        // Border routing: global node coordinate -> banded index or border slot.
        let last = nn - 1;
        let elast = 2.0 * nf / tau;
        let off = -nf / tau;
        let mut seg_sum = 0.0;
        for i in 0..nn {
            let prev = lp.node((i + nn - 1) % nn);
            let cur = lp.node(i);
            let next = lp.node((i + 1) % nn);
            let (_, du, huu) = potential_hess(self.domain, self.pen.d0, cur)?;

            // Node-diagonal block: elastic identity minus scaled potential
            // curvature (dense symmetric n x n).
            for r in 0..n {
                for c in r..n {
                    let mut v = -tau / nf * self.pen.eps * huu[r * n + c];
                    if r == c {
                        v += elast;
                    }
                    if i < last {
                        bb.band_add(i * n + r, i * n + c, v);
                    } else {
                        bb.corner_add(r, c, v);
                    }
                }
            }

            // Adjacent-node coupling for the segment i -> i+1 (diagonal blocks
            // -N/tau I; the wrap segment lands in the border columns).
            let j = (i + 1) % nn;
            for k in 0..n {
                match (i < last, j < last) {
                    (true, true) => bb.band_add(i * n + k, j * n + k, off),
                    (true, false) => bb.col_add(i * n + k, k, off),
                    (false, true) => bb.col_add(j * n + k, k, off),
                    (false, false) => unreachable!("loop has at least three nodes"),
                }
            }

            if free_tau {
                // Mixed node/tau second derivatives.
                for k in 0..n {
                    let mv = -nf / (tau * tau) * (2.0 * cur[k] - next[k] - prev[k])
                        - self.pen.eps / nf * du[k];
                    if i < last {
                        bb.col_add(i * n + k, tau_slot, mv);
                    } else {
                        bb.corner_add(k, tau_slot, mv);
                    }
                }
            }
            for k in 0..n {
                let d = next[k] - cur[k];
                seg_sum += d * d;
            }
        }
        if free_tau {
            bb.corner_add(tau_slot, tau_slot, nf / tau.powi(3) * seg_sum);
        }
        if let Some(c) = phase {
            for i in 0..nn {
                for k in 0..n {
                    let v = c[i * n + k];
                    if i < last {
                        bb.col_add(i * n + k, phase_slot, v);
                    } else {
                        bb.corner_add(k, phase_slot, v);
                    }
                }
            }
            if free_tau {
                bb.corner_add(tau_slot, phase_slot, c[nn * n]);
            }
        }
        Ok(bb)
    }

    /// Per-node Euler-Lagrange residual norms,
    /// |N^2 (G_{i+1} - 2 G_i + G_{i-1}) + tau^2 eps grad U(G_i)|.
    ///
    /// The second difference is formed as a difference of first differences
    /// so nearby nodes cancel exactly before the N^2 amplification.
    pub fn el_residuals(&self, lp: &DiscreteLoop) -> Result<Vec<f64>, ActionError> {
        self.check_dim(lp)?;
        let (nn, n) = (lp.node_count(), lp.dim());
        let (nf, tau) = (nn as f64, lp.tau);
        let mut out = Vec::with_capacity(nn);
        for i in 0..nn {
            let prev = lp.node((i + nn - 1) % nn);
            let cur = lp.node(i);
            let next = lp.node((i + 1) % nn);
            let (_, du) = potential_grad(self.domain, self.pen.d0, cur)?;
            let mut s = 0.0;
            for k in 0..n {
                let d_next = next[k] - cur[k];
                let d_prev = cur[k] - prev[k];
                let r = nf * nf * (d_next - d_prev) + tau * tau * self.pen.eps * du[k];
                s += r * r;
            }
            out.push(s.sqrt());
        }
        Ok(out)
    }

    /// Per-node total energy, (1/2)|dG/dt|^2 + eps U, with the physical
    /// velocity from the central difference dG/dt = N (G_{i+1} - G_{i-1}) / (2 tau).
    /// Constancy across nodes certifies the discrete trajectory.
    pub fn node_energies(&self, lp: &DiscreteLoop) -> Result<Vec<f64>, ActionError> {
        self.check_dim(lp)?;
        let (nn, n) = (lp.node_count(), lp.dim());
        let (nf, tau) = (nn as f64, lp.tau);
        let mut out = Vec::with_capacity(nn);
        for i in 0..nn {
            let prev = lp.node((i + nn - 1) % nn);
            let next = lp.node((i + 1) % nn);
            let mut v2 = 0.0;
            for k in 0..n {
                let v = nf * (next[k] - prev[k]) / (2.0 * tau);
                v2 += v * v;
            }
            let u = potential(self.domain, self.pen.d0, lp.node(i))?;
            out.push(0.5 * v2 + self.pen.eps * u);
        }
        Ok(out)
    }

    /// Number of decreasing directions of the fixed-tau Hessian: eigenvalues
    /// below -t for t = [`MORSE_SHIFT_REL`] times the Gershgorin bound,
    /// counted by banded LDL^T pivot signs plus the border Schur complement.
    pub fn morse_index_fixed_tau(&self, lp: &DiscreteLoop) -> Result<usize, ActionError> {
        let h = self.hessian_fixed_tau(lp)?;
        let t = MORSE_SHIFT_REL * h.gershgorin_bound();
        for jitter in SHIFT_JITTERS {
            if let Some(f) = h.shifted(t * jitter, 0).factor(PIVOT_ZERO_TOL) {
                return Ok(f.inertia(SCHUR_ZERO_TOL).0);
            }
        }
        Err(ActionError::PivotBreakdown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wobbly_loop(nn: usize, tau: f64) -> DiscreteLoop {
        let mut pts = Vec::with_capacity(nn * 2);
        for i in 0..nn {
            let th = 2.0 * std::f64::consts::PI * i as f64 / nn as f64;
            let r = 0.6 + 0.05 * (3.0 * th + 1.0).sin();
            pts.push(r * th.cos());
            pts.push(r * th.sin());
        }
        DiscreteLoop::new(pts, tau, 2).expect("valid loop")
    }

    #[test]
    fn state_round_trip() {
        let lp = wobbly_loop(16, 5.0);
        let back = DiscreteLoop::from_state(2, &lp.state()).expect("round trip");
        assert_eq!(back.points(), lp.points());
        assert_eq!(back.tau, lp.tau);
    }

    #[test]
    fn resample_copies_aligned_nodes_exactly() {
        let lp = wobbly_loop(16, 5.0);
        let up = lp.resample(32).expect("upsample");
        for i in 0..16 {
            assert_eq!(up.node(2 * i), lp.node(i));
        }
        let down = up.resample(16).expect("downsample");
        assert_eq!(down.points(), lp.points());
        // Proportional perimeter change stays small under refinement.
        assert!((up.perimeter() - lp.perimeter()).abs() < 0.05 * lp.perimeter());
    }

    #[test]
    fn phase_tangent_is_unit_with_zero_tau_slot() {
        let lp = wobbly_loop(16, 5.0);
        let c = lp.phase_tangent();
        assert_eq!(c.len(), 33);
        assert_eq!(c[32], 0.0);
        let norm: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_degenerate_loops() {
        assert!(DiscreteLoop::new(vec![0.0; 4], 1.0, 2).is_err()); // two nodes
        assert!(DiscreteLoop::new(vec![0.0; 6], 0.0, 2).is_err()); // zero period
        assert!(DiscreteLoop::new(vec![0.0; 5], 1.0, 2).is_err()); // ragged buffer
    }
}
