//! Small dense solves and a symmetric banded LDL^T with a dense border.
//!
//! The loop Hessian in node-major order is block tridiagonal with n x n blocks
//! plus a cyclic corner (last node couples to node 0), a dense tau row/column,
//! and optionally a phase-constraint row. Moving the last node, tau and the
//! constraint into a border leaves a scalar band of half-bandwidth n:
//!
//!   M = [ A  B ]   A banded (m x m), B dense (m x p), C dense (p x p)
//!       [ B' C ]
//!
//! Factoring A = L D L' and forming the Schur complement S = C - B' A^-1 B
//! gives solves in O(m n^2) and, by Haynsworth inertia additivity,
//! inertia(M) = inertia(D) + inertia(S).

/// Solve `a x = b` for a small row-major `n x n` system by partial-pivot
/// Gaussian elimination, in place. Returns false if the matrix is singular.
pub fn solve_dense(n: usize, a: &mut [f64], b: &mut [f64]) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return false;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    true
}

/// Symmetric banded matrix with a dense symmetric border.
///
/// Banded part: `band[i * (hbw + 1) + k]` holds `A[i, i + k]` for
/// `k = 0..=hbw` (entries past the matrix edge are ignored).
/// Border columns: `cols[j * m + i] = B[i, j]`, corner: row-major `p x p`.
pub struct BorderedBanded {
    pub m: usize,
    pub hbw: usize,
    pub p: usize,
    pub band: Vec<f64>,
    pub cols: Vec<f64>,
    pub corner: Vec<f64>,
}

pub struct BorderedFactor {
    m: usize,
    hbw: usize,
    p: usize,
    /// L (strict lower band, same layout as input band rows) and D (k = 0 slot).
    ldl: Vec<f64>,
    /// X = A^-1 B, column-major.
    x: Vec<f64>,
    /// Schur complement S = C - B' X, row-major p x p.
    schur: Vec<f64>,
    neg_a: usize,
    zero_a: usize,
}

impl BorderedBanded {
    pub fn new(m: usize, hbw: usize, p: usize) -> Self {
        Self {
            m,
            hbw,
            p,
            band: vec![0.0; m * (hbw + 1)],
            cols: vec![0.0; m * p],
            corner: vec![0.0; p * p],
        }
    }

    #[inline]
    pub fn band_add(&mut self, i: usize, j: usize, v: f64) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= self.hbw);
        self.band[lo * (self.hbw + 1) + (hi - lo)] += v;
    }

    #[inline]
    pub fn col_add(&mut self, i: usize, j: usize, v: f64) {
        self.cols[j * self.m + i] += v;
    }

    #[inline]
    pub fn corner_add(&mut self, i: usize, j: usize, v: f64) {
        self.corner[i * self.p + j] += v;
        if i != j {
            self.corner[j * self.p + i] += v;
        }
    }

    /// Copy with `s` added to every diagonal entry except the last
    /// `skip_last` border slots (kept untouched so a constraint corner
    /// stays exactly zero under damping).
    pub fn shifted(&self, s: f64, skip_last: usize) -> Self {
        let mut out = Self {
            m: self.m,
            hbw: self.hbw,
            p: self.p,
            band: self.band.clone(),
            cols: self.cols.clone(),
            corner: self.corner.clone(),
        };
        let w = self.hbw + 1;
        for i in 0..self.m {
            out.band[i * w] += s;
        }
        for j in 0..self.p.saturating_sub(skip_last) {
            out.corner[j * self.p + j] += s;
        }
        out
    }

    /// y = M x for the full bordered matrix (both length m + p).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let (m, hbw, p) = (self.m, self.hbw, self.p);
        let w = hbw + 1;
        debug_assert_eq!(x.len(), m + p);
        debug_assert_eq!(y.len(), m + p);
        y.fill(0.0);
        for i in 0..m {
            for k in 0..=hbw.min(m - 1 - i) {
                let v = self.band[i * w + k];
                y[i] += v * x[i + k];
                if k > 0 {
                    y[i + k] += v * x[i];
                }
            }
        }
        for j in 0..p {
            for i in 0..m {
                let v = self.cols[j * m + i];
                y[i] += v * x[m + j];
                y[m + j] += v * x[i];
            }
            for i in 0..p {
                y[m + j] += self.corner[j * p + i] * x[m + i];
            }
        }
    }

    /// Largest absolute row sum: a cheap upper bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        let (m, hbw, p) = (self.m, self.hbw, self.p);
        let w = hbw + 1;
        let mut row = vec![0.0f64; m + p];
        for i in 0..m {
            for k in 0..=hbw.min(m - 1 - i) {
                let v = self.band[i * w + k].abs();
                row[i] += v;
                if k > 0 {
                    row[i + k] += v;
                }
            }
        }
        for j in 0..p {
            for i in 0..m {
                let v = self.cols[j * m + i].abs();
                row[i] += v;
                row[m + j] += v;
            }
            for i in 0..p {
                row[m + j] += self.corner[j * p + i].abs();
            }
        }
        row.into_iter().fold(f64::MIN_POSITIVE, f64::max)
    }

    /// Dense symmetric copy, for small-size oracle checks.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let (m, p, w) = (self.m, self.p, self.hbw + 1);
        let n = m + p;
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for i in 0..m {
            for k in 0..=self.hbw.min(m - 1 - i) {
                let v = self.band[i * w + k];
                a[(i, i + k)] = v;
                a[(i + k, i)] = v;
            }
        }
        for j in 0..p {
            for i in 0..m {
                a[(i, m + j)] = self.cols[j * m + i];
                a[(m + j, i)] = self.cols[j * m + i];
            }
        }
        for i in 0..p {
            for j in 0..p {
                a[(m + i, m + j)] = self.corner[i * p + j];
            }
        }
        a
    }

    /// LDL^T of the banded part, border solves and Schur complement.
    ///
    /// `zero_tol` (relative to the largest diagonal magnitude) decides when a
    /// pivot counts as zero; a zero pivot aborts with `None` since the
    /// factorization cannot continue reliably. Callers damp (solve path) or
    /// jitter the shift (inertia path) and retry.
    pub fn factor(&self, zero_tol: f64) -> Option<BorderedFactor> {
        let (m, hbw, p) = (self.m, self.hbw, self.p);
        let w = hbw + 1;
        let mut ldl = self.band.clone();
        let scale = (0..m)
            .map(|i| self.band[i * w].abs())
            .fold(f64::MIN_POSITIVE, f64::max);
        let tol = zero_tol * scale;
        let mut neg_a = 0usize;
        let zero_a = 0usize;
        // Banded LDL^T: column i eliminates rows i+1..=i+hbw.
        for i in 0..m {
            let di = ldl[i * w];
            if !di.is_finite() || di.abs() <= tol {
                return None;
            }
            if di < 0.0 {
                neg_a += 1;
            }
            let reach = hbw.min(m - 1 - i);
            for r in 1..=reach {
                let lir = ldl[i * w + r] / di;
                // Row update: A[i+r, i+r ..= i+hbw] -= l * A[i, ...]
                for c in r..=reach {
                    ldl[(i + r) * w + (c - r)] -= lir * ldl[i * w + c];
                }
                ldl[i * w + r] = lir;
            }
        }
        // Border solves: X = A^-1 B via L D L' x = b.
        let mut x = self.cols.clone();
        for j in 0..p {
            let xj = &mut x[j * m..(j + 1) * m];
            // forward: L y = b
            for i in 0..m {
                let yi = xj[i];
                if yi != 0.0 {
                    let reach = hbw.min(m - 1 - i);
                    for r in 1..=reach {
                        xj[i + r] -= ldl[i * w + r] * yi;
                    }
                }
            }
            // diagonal
            for i in 0..m {
                xj[i] /= ldl[i * w];
            }
            // backward: L' x = y
            for i in (0..m).rev() {
                let reach = hbw.min(m - 1 - i);
                let mut s = xj[i];
                for r in 1..=reach {
                    s -= ldl[i * w + r] * xj[i + r];
                }
                xj[i] = s;
            }
        }
        // Schur complement S = C - B' X.
        let mut schur = self.corner.clone();
        for a in 0..p {
            for b in a..p {
                let mut s = 0.0;
                for i in 0..m {
                    s += self.cols[a * m + i] * x[b * m + i];
                }
                schur[a * p + b] -= s;
                if a != b {
                    schur[b * p + a] = schur[a * p + b];
                }
            }
        }
        Some(BorderedFactor {
            m,
            hbw,
            p,
            ldl,
            x,
            schur,
            neg_a,
            zero_a,
        })
    }
}

impl BorderedFactor {
    /// Solve `M z = rhs` (length m + p) via block elimination.
    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) -> bool {
        let (m, hbw, p) = (self.m, self.hbw, self.p);
        let w = hbw + 1;
        debug_assert_eq!(rhs.len(), m + p);
        // u = A^-1 r1
        let mut u = rhs[..m].to_vec();
        for i in 0..m {
            let yi = u[i];
            if yi != 0.0 {
                let reach = hbw.min(m - 1 - i);
                for r in 1..=reach {
                    u[i + r] -= self.ldl[i * w + r] * yi;
                }
            }
        }
        for i in 0..m {
            u[i] /= self.ldl[i * w];
        }
        for i in (0..m).rev() {
            let reach = hbw.min(m - 1 - i);
            let mut s = u[i];
            for r in 1..=reach {
                s -= self.ldl[i * w + r] * u[i + r];
            }
            u[i] = s;
        }
        // zp = S^-1 (r2 - B' A^-1 r1); by symmetry B' A^-1 r1 = (A^-1 B)' r1 = X' r1.
        let mut r2 = vec![0.0; p];
        for j in 0..p {
            let mut s = rhs[m + j];
            for i in 0..m {
                s -= self.x[j * m + i] * rhs[i];
            }
            r2[j] = s;
        }
        let mut s_lu = self.schur.clone();
        if !solve_dense(p, &mut s_lu, &mut r2) {
            return false;
        }
        // z1 = u - X zp
        for i in 0..m {
            let mut s = u[i];
            for j in 0..p {
                s -= self.x[j * m + i] * r2[j];
            }
            out[i] = s;
        }
        out[m..m + p].copy_from_slice(&r2);
        true
    }

    /// (negative, zero, positive) eigenvalue counts of the full bordered matrix.
    ///
    /// Banded inertia comes from the LDL^T pivot signs, the border's from a
    /// dense symmetric eigensolve of the Schur complement; counts add by
    /// Haynsworth. `schur_zero_tol` is relative to the Schur norm.
    pub fn inertia(&self, schur_zero_tol: f64) -> (usize, usize, usize) {
        let p = self.p;
        let (mut neg, mut zero) = (self.neg_a, self.zero_a);
        if p > 0 {
            let s = nalgebra::DMatrix::from_row_slice(p, p, &self.schur);
            let norm = s.norm().max(f64::MIN_POSITIVE);
            let eig = s.symmetric_eigenvalues();
            for &ev in eig.iter() {
                if ev < -schur_zero_tol * norm {
                    neg += 1;
                } else if ev <= schur_zero_tol * norm {
                    zero += 1;
                }
            }
        }
        let pos = self.m + p - neg - zero;
        (neg, zero, pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_bb(seed: u64, m: usize, hbw: usize, p: usize) -> BorderedBanded {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut bb = BorderedBanded::new(m, hbw, p);
        for i in 0..m {
            for k in 0..=hbw.min(m - 1 - i) {
                let v: f64 = rng.gen_range(-1.0..1.0);
                bb.band[i * (hbw + 1) + k] = if k == 0 { v + 3.0 } else { v };
            }
        }
        for j in 0..p {
            for i in 0..m {
                bb.cols[j * m + i] = rng.gen_range(-0.5..0.5);
            }
        }
        for i in 0..p {
            for j in i..p {
                let v: f64 = rng.gen_range(-1.0..1.0);
                bb.corner[i * p + j] = v;
                bb.corner[j * p + i] = v;
            }
        }
        bb
    }

    #[test]
    fn solve_dense_small() {
        let mut a = vec![2.0, 1.0, 1.0, 3.0];
        let mut b = vec![5.0, 10.0];
        assert!(solve_dense(2, &mut a, &mut b));
        assert!((b[0] - 1.0).abs() < 1e-14);
        assert!((b[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn bordered_solve_matches_dense() {
        for seed in 0..8 {
            let bb = random_bb(seed, 40, 3, 4);
            let a = bb.to_dense();
            let f = bb.factor(1e-14).expect("factorizable");
            let n = bb.m + bb.p;
            let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
            let mut z = vec![0.0; n];
            assert!(f.solve(&rhs, &mut z));
            let zd = nalgebra::DVector::from_column_slice(&z);
            let rd = nalgebra::DVector::from_column_slice(&rhs);
            let res = (&a * &zd - &rd).norm() / rd.norm();
            assert!(res < 1e-9, "seed {seed}: residual {res}");
        }
    }

    #[test]
    fn matvec_matches_dense_product() {
        let bb = random_bb(7, 30, 3, 4);
        let a = bb.to_dense();
        let n = bb.m + bb.p;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut y = vec![0.0; n];
        bb.matvec(&x, &mut y);
        let yd = &a * nalgebra::DVector::from_column_slice(&x);
        for i in 0..n {
            assert!((y[i] - yd[i]).abs() < 1e-12 * (1.0 + yd[i].abs()));
        }
    }

    #[test]
    fn bordered_inertia_matches_dense_eigen() {
        for seed in 0..12 {
            let bb = random_bb(100 + seed, 35, 2, 3);
            let a = bb.to_dense();
            // Shift to make it properly indefinite.
            let shifted = &a - nalgebra::DMatrix::identity(a.nrows(), a.ncols()) * 2.5;
            let mut bb2 = bb;
            for i in 0..bb2.m {
                bb2.band[i * (bb2.hbw + 1)] -= 2.5;
            }
            for i in 0..bb2.p {
                bb2.corner[i * bb2.p + i] -= 2.5;
            }
            let f = match bb2.factor(1e-13) {
                Some(f) => f,
                None => continue, // pivot hit the shift; fine for random probes
            };
            let (neg, zero, _) = f.inertia(1e-12);
            let eig = shifted.symmetric_eigenvalues();
            let neg_d = eig.iter().filter(|&&e| e < 0.0).count();
            assert_eq!(zero, 0, "seed {seed}");
            assert_eq!(neg, neg_d, "seed {seed}: banded {neg} vs dense {neg_d}");
        }
    }
}
