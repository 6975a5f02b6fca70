//! Restarted block Krylov iteration for the top of a symmetric spectrum.
//!
//! Used when a matrix is too large for dense Jacobi sweeps. The operator is
//! only touched through matrix-vector products.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::jacobi::{fix_column_signs, sort_descending};
use crate::error::{Error, Result};
use crate::sbm::SampledGraph;

/// A symmetric linear operator.
pub trait SymOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Images of several vectors at once.
    fn apply_block(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        xs.iter()
            .map(|x| {
                let mut y = vec![0.0; self.dim()];
                self.apply(x, &mut y);
                y
            })
            .collect()
    }
}

impl SymOp for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (yi, &mij) in y.iter_mut().zip(self.column(j).iter()) {
                    *yi += mij * xj;
                }
            }
        }
    }

    fn apply_block(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        let x = DMatrix::from_fn(self.ncols(), xs.len(), |i, j| xs[j][i]);
        let y = self * x;
        y.column_iter().map(|c| c.iter().copied().collect()).collect()
    }
}

impl SymOp for SampledGraph {
    fn dim(&self) -> usize {
        self.n_nodes()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }

    fn apply_block(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        self.matvec_block(xs)
    }
}

/// Wraps a closure as an operator.
pub struct FnOp<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> SymOp for FnOp<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// `-op`.
pub struct Negated<'a, O: SymOp>(pub &'a O);

impl<O: SymOp> SymOp for Negated<'_, O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply(x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    }

    fn apply_block(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        let mut ys = self.0.apply_block(xs);
        ys.iter_mut().flatten().for_each(|v| *v = -*v);
        ys
    }
}

/// Leading eigenpairs of an operator.
#[derive(Clone, Debug)]
pub struct TopEigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Largest `‖M u - λ u‖ / ‖M‖` over the returned pairs, with the last
    /// pair rescaled onto `residual_tol` when a tail tolerance is set.
    pub max_residual: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub residual_tol: f64,
    pub max_restarts: usize,
    pub extra_block: usize,
    pub max_basis: usize,
    /// Looser tolerance for the last requested pair.
    pub tail_tol: Option<f64>,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            max_restarts: 60,
            extra_block: 8,
            max_basis: 160,
            tail_tol: None,
        }
    }
}

/// Appends the columns of `w` to `q[:, ..*d]` after two rounds of block
/// Gram-Schmidt against the existing basis and one another. Columns that
/// lose nearly all of their norm are dropped. Returns the new column range.
fn extend_basis(q: &mut DMatrix<f64>, d: &mut usize, mut w: DMatrix<f64>) -> std::ops::Range<usize> {
    let start = *d;
    let before: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    if start > 0 {
        for _ in 0..2 {
            let qd = q.columns(0, start);
            let c = qd.transpose() * &w;
            w -= qd * c;
        }
    }
    for j in 0..w.ncols() {
        if *d == q.ncols() {
            break;
        }
        let mut v = w.column(j).into_owned();
        for _ in 0..2 {
            for i in start..*d {
                let c = q.column(i).dot(&v);
                v.axpy(-c, &q.column(i), 1.0);
            }
        }
        let after = v.norm();
        if before[j] > 0.0 && after > 1e-10 * before[j] {
            q.set_column(*d, &(v / after));
            *d += 1;
        }
    }
    start..*d
}

/// The `k` algebraically largest eigenpairs of `op`.
pub fn top_eigenpairs<O: SymOp + ?Sized>(op: &O, k: usize, opts: KrylovOptions) -> Result<TopEigenpairs> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::RankOutOfRange { k, max: n });
    }
    let block = (k + opts.extra_block).min(n);
    let max_basis = opts.max_basis.max(2 * block).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(0x6b72_796c_6f76 ^ n as u64);
    let mut start = DMatrix::from_fn(n, block, |_, _| rng.random::<f64>() - 0.5);

    let mut q = DMatrix::zeros(n, max_basis);
    let mut aq = DMatrix::zeros(n, max_basis);
    let mut best: Option<TopEigenpairs> = None;
    for _ in 0..opts.max_restarts.max(1) {
        let mut d = 0;
        let mut fresh = extend_basis(&mut q, &mut d, start);
        while !fresh.is_empty() {
            let xs: Vec<Vec<f64>> = fresh.clone().map(|i| q.column(i).iter().copied().collect()).collect();
            let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
            for (i, y) in fresh.clone().zip(op.apply_block(&refs)) {
                aq.set_column(i, &nalgebra::DVector::from_vec(y));
            }
            if d == max_basis {
                break;
            }
            let w = aq.columns(fresh.start, fresh.len()).into_owned();
            fresh = extend_basis(&mut q, &mut d, w);
        }
        if d < k {
            return Err(Error::Degenerate(format!("Krylov space collapsed to dimension {d}")));
        }
        let qd = q.columns(0, d);
        let aqd = aq.columns(0, d);
        let t = qd.transpose() * aqd;
        let t = (&t + t.transpose()) * 0.5;
        // the projected problem is small; tridiagonal QR beats Jacobi here
        let eig = nalgebra::SymmetricEigen::new(t);
        let (theta, y) = sort_descending(eig.eigenvalues.iter().copied().collect(), &eig.eigenvectors);
        let norm = theta.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);

        let keep = block.min(d);
        let yk = y.columns(0, keep);
        let ritz = qd * yk;
        let av = aqd * yk;
        let mut worst = 0.0_f64;
        for c in 0..k {
            let res = (av.column(c) - ritz.column(c) * theta[c]).norm();
            let tol = match opts.tail_tol {
                Some(t) if c + 1 == k => t,
                _ => opts.residual_tol,
            };
            worst = worst.max(res / norm * opts.residual_tol / tol);
        }
        let converged = worst <= opts.residual_tol || d == n;
        let mut vectors = ritz.columns(0, k).into_owned();
        fix_column_signs(&mut vectors);
        let result = TopEigenpairs {
            values: theta[..k].to_vec(),
            vectors,
            max_residual: worst,
            converged,
        };
        if converged {
            return Ok(result);
        }
        if best.as_ref().is_none_or(|b| worst < b.max_residual) {
            best = Some(result);
        }
        start = ritz;
    }
    Ok(best.expect("at least one restart ran"))
}

/// `max |λ|` of an operator.
pub fn operator_norm_op<O: SymOp + ?Sized>(op: &O) -> Result<f64> {
    operator_norm_with(
        op,
        KrylovOptions {
            residual_tol: 1e-6,
            extra_block: 0,
            max_basis: 100,
            ..KrylovOptions::default()
        },
    )
}

/// `max |λ|` from the top of `op` and of `-op`.
pub fn operator_norm_with<O: SymOp + ?Sized>(op: &O, opts: KrylovOptions) -> Result<f64> {
    struct Wrap<'a, O: ?Sized>(&'a O);
    impl<O: SymOp + ?Sized> SymOp for Wrap<'_, O> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            self.0.apply(x, y)
        }
        fn apply_block(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
            self.0.apply_block(xs)
        }
    }
    let w = Wrap(op);
    let top = top_eigenpairs(&w, 1, opts)?.values[0];
    let bottom = -top_eigenpairs(&Negated(&w), 1, opts)?.values[0];
    Ok(top.abs().max(bottom.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::jacobi::{symmetric_eigensystem, DEFAULT_TOL};

    fn test_matrix(n: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        m = &m + m.transpose();
        for i in 0..4 {
            m[(i, i)] += 40.0 - 5.0 * i as f64;
        }
        m
    }

    #[test]
    fn matches_dense_solver() {
        let m = test_matrix(90);
        let dense = symmetric_eigensystem(&m, DEFAULT_TOL).unwrap();
        let top = top_eigenpairs(&m, 4, KrylovOptions::default()).unwrap();
        assert!(top.converged);
        for i in 0..4 {
            assert!((top.values[i] - dense.eigenvalues[i]).abs() < 1e-9);
            let overlap = top.vectors.column(i).dot(&dense.eigenvectors.column(i)).abs();
            assert!((overlap - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn norm_sees_negative_end() {
        let m = -test_matrix(60);
        let dense = symmetric_eigensystem(&m, DEFAULT_TOL).unwrap();
        let want = dense.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!((operator_norm_op(&m).unwrap() - want).abs() < 1e-8 * want);
    }

    #[test]
    fn deterministic() {
        let m = test_matrix(70);
        let a = top_eigenpairs(&m, 3, KrylovOptions::default()).unwrap();
        let b = top_eigenpairs(&m, 3, KrylovOptions::default()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }
}
