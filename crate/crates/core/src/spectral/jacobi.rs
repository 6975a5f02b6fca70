//! Cyclic Jacobi rotations for dense symmetric matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::max_asymmetry;

pub const DEFAULT_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 100;
const SIGN_THRESHOLD: f64 = 1e-10;

/// Full eigendecomposition with eigenvalues sorted descending.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    /// Largest `‖M u - λ u‖ / ‖M‖` over all pairs.
    pub residual_tol: f64,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Flips `v` so its first entry above the threshold is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_THRESHOLD) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

pub(crate) fn fix_column_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        fix_sign(col.as_mut_slice());
    }
}

/// Eigenvalues and eigenvectors of a symmetric matrix, unsorted.
pub(crate) fn jacobi_raw(m: &DMatrix<f64>, tol: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm();
    if scale == 0.0 || n == 1 {
        return Ok((a.diagonal().iter().copied().collect(), v));
    }
    let target = tol * scale;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() < target {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
        });
    }
    Ok((a.diagonal().iter().copied().collect(), v))
}

/// Sorts eigenpairs descending; equal values keep their input order.
pub(crate) fn sort_descending(values: Vec<f64>, vectors: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted_vals = order.iter().map(|&i| values[i]).collect();
    let sorted_vecs = DMatrix::from_fn(vectors.nrows(), order.len(), |r, c| vectors[(r, order[c])]);
    (sorted_vals, sorted_vecs)
}

/// Full spectrum of a symmetric matrix. `tol` bounds the remaining
/// off-diagonal Frobenius mass relative to `‖M‖_F`.
pub fn symmetric_eigensystem(m: &DMatrix<f64>, tol: f64) -> Result<EigenSystem> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let asym = max_asymmetry(m);
    let scale = m.amax().max(1.0);
    if asym > 1e-12 * scale {
        return Err(Error::NonSymmetric {
            max_asymmetry: asym,
        });
    }
    let (vals, vecs) = jacobi_raw(m, tol)?;
    let (eigenvalues, mut eigenvectors) = sort_descending(vals, &vecs);
    fix_column_signs(&mut eigenvectors);
    let norm = eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mu = m * &eigenvectors;
    let mut worst = 0.0_f64;
    for (i, &lam) in eigenvalues.iter().enumerate() {
        let r = (mu.column(i) - eigenvectors.column(i) * lam).norm();
        worst = worst.max(r);
    }
    let residual_tol = if norm > 0.0 { worst / norm } else { worst };
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        residual_tol,
    })
}
