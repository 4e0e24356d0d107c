//! Derivative-free simplex minimizer for low-dimensional polish steps.
//!
//! Used to sharpen the inradius grid incumbent: the objective (negated
//! interior depth) is smooth near the maximizer but its derivatives are not
//! worth wiring up for a handful of calls. Standard Nelder-Mead with
//! reflection/expansion/contraction/shrink and a diameter-based stop.

/// Minimize `f` from `x0`, initial simplex edge `scale`. Returns (argmin, min).
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    x0: &[f64],
    scale: f64,
    max_iters: usize,
    tol: f64,
    mut f: F,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += scale;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iters {
        // Order simplex by value.
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let best = idx[0];
        let worst = idx[n];
        let second_worst = idx[n - 1];

        // Stop when the simplex has collapsed.
        let diam = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diam < tol {
            break;
        }

        // Centroid of all but the worst.
        let mut cen = vec![0.0; n];
        for (k, v) in simplex.iter().enumerate() {
            if k != worst {
                for i in 0..n {
                    cen[i] += v[i];
                }
            }
        }
        for c in cen.iter_mut() {
            *c /= n as f64;
        }

        let blend = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|i| cen[i] + t * (simplex[worst][i] - cen[i]))
                .collect()
        };
        let refl = blend(-1.0);
        let f_refl = f(&refl);
        if f_refl < vals[best] {
            let exp = blend(-2.0);
            let f_exp = f(&exp);
            if f_exp < f_refl {
                simplex[worst] = exp;
                vals[worst] = f_exp;
            } else {
                simplex[worst] = refl;
                vals[worst] = f_refl;
            }
        } else if f_refl < vals[second_worst] {
            simplex[worst] = refl;
            vals[worst] = f_refl;
        } else {
            let con = if f_refl < vals[worst] {
                blend(-0.5)
            } else {
                blend(0.5)
            };
            let f_con = f(&con);
            if f_con < vals[worst].min(f_refl) {
                simplex[worst] = con;
                vals[worst] = f_con;
            } else {
                // Shrink toward the best vertex.
                let bst = simplex[best].clone();
                for (k, v) in simplex.iter_mut().enumerate() {
                    if k != best {
                        for i in 0..n {
                            v[i] = bst[i] + 0.5 * (v[i] - bst[i]);
                        }
                        vals[k] = f(v);
                    }
                }
            }
        }
    }
    let mut bi = 0;
    for k in 1..=n {
        if vals[k] < vals[bi] {
            bi = k;
        }
    }
    (simplex[bi].clone(), vals[bi])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let (x, v) = minimize(&[2.0, -1.5], 0.5, 400, 1e-10, |p| {
            (p[0] - 0.3).powi(2) + 2.0 * (p[1] + 0.7).powi(2)
        });
        assert!((x[0] - 0.3).abs() < 1e-8);
        assert!((x[1] + 0.7).abs() < 1e-8);
        assert!(v < 1e-15);
    }
}
