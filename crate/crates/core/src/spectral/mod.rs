//! Spectral contrastive embeddings, low-rank truncations and perturbation
//! bounds.

mod jacobi;
pub mod krylov;

use nalgebra::DMatrix;
use serde::Serialize;

pub use jacobi::{symmetric_eigensystem, EigenSystem, DEFAULT_TOL};
pub use krylov::{operator_norm_op, operator_norm_with, top_eigenpairs, FnOp, KrylovOptions, Negated, SymOp, TopEigenpairs};

use crate::error::{Error, Result};
use crate::graph::PairGraph;
use crate::numfmt;
use crate::sbm::SampledGraph;

/// Matrices up to this size go through dense Jacobi.
pub const DENSE_LIMIT: usize = 256;
/// Relative spacing under which two eigenvalues count as tied.
pub const TIE_TOL: f64 = 1e-10;

/// Rows are node features `φ̂(x)`, with `F Fᵀ` the rank-k truncation of
/// `N² W`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEmbedding {
    pub features: DMatrix<f64>,
    /// Retained eigenvalues of the pair matrix `W`, descending.
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    /// Set when the k-th eigenvalue is tied with the (k+1)-th.
    pub tie_warning: bool,
}

#[derive(Serialize)]
struct EmbeddingJson<'a> {
    k: usize,
    #[serde(serialize_with = "numfmt::ser_vec")]
    eigenvalues: &'a [f64],
    #[serde(serialize_with = "numfmt::ser_vec")]
    features: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&EmbeddingJson {
            k: self.k,
            eigenvalues: &self.eigenvalues,
            features: crate::graph::row_major(&self.features),
        })?)
    }

    /// Applies an orthonormal `k×k` rotation to the features.
    pub fn rotated(&self, rotation: &DMatrix<f64>) -> Self {
        Self {
            features: &self.features * rotation,
            ..self.clone()
        }
    }
}

fn check_rank(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::RankOutOfRange { k, max: n });
    }
    Ok(())
}

/// `Σ_{i≤k} λ_i u_i u_iᵀ` over the descending spectrum.
pub fn rank_k_approx(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    check_rank(k, m.nrows())?;
    let es = symmetric_eigensystem(m, DEFAULT_TOL)?;
    Ok(rank_k_from(&es, k))
}

pub fn rank_k_from(es: &EigenSystem, k: usize) -> DMatrix<f64> {
    let u = es.eigenvectors.columns(0, k);
    let scaled = DMatrix::from_fn(u.nrows(), k, |i, j| u[(i, j)] * es.eigenvalues[j]);
    scaled * u.transpose()
}

/// Rank-k truncation that resolves a tie at position k the same way
/// [`embed`] does, by ascending energy on `source`.
pub fn rank_k_canonical(m: &DMatrix<f64>, k: usize, source: &[usize]) -> Result<DMatrix<f64>> {
    check_rank(k, m.nrows())?;
    let es = symmetric_eigensystem(m, DEFAULT_TOL)?;
    let vals = &es.eigenvalues;
    if k < vals.len() && is_tied(vals[k - 1], vals[k], vals[0].abs()) {
        let u = canonicalize_tie(&es, k, source)?;
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&vals[..k]));
        Ok(&u * lam * u.transpose())
    } else {
        Ok(rank_k_from(&es, k))
    }
}

/// `max |λ_i|`.
pub fn operator_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.nrows() <= DENSE_LIMIT {
        let es = symmetric_eigensystem(m, DEFAULT_TOL)?;
        Ok(es.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
    } else {
        operator_norm_op(m)
    }
}

/// Leading eigenpairs of a dense symmetric matrix, by Jacobi for small
/// sizes and Krylov otherwise. Always returns `want` pairs.
fn leading_pairs(m: &DMatrix<f64>, want: usize) -> Result<(Vec<f64>, DMatrix<f64>, Option<EigenSystem>)> {
    if m.nrows() <= DENSE_LIMIT {
        let es = symmetric_eigensystem(m, DEFAULT_TOL)?;
        let vals = es.eigenvalues[..want].to_vec();
        let vecs = es.eigenvectors.columns(0, want).into_owned();
        Ok((vals, vecs, Some(es)))
    } else {
        let top = top_eigenpairs(m, want, KrylovOptions::default())?;
        Ok((top.values, top.vectors, None))
    }
}

/// Inside an eigenspace that straddles position `k`, orders the basis by
/// ascending mass on the source nodes so the retained vectors are a fixed
/// function of the eigenspace rather than of the solver's arbitrary basis.
fn canonicalize_tie(es: &EigenSystem, k: usize, source: &[usize]) -> Result<DMatrix<f64>> {
    let vals = &es.eigenvalues;
    let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = TIE_TOL * scale.max(f64::MIN_POSITIVE);
    let pivot = vals[k - 1];
    let lo = (0..k).find(|&i| (vals[i] - pivot).abs() <= tol).unwrap_or(k - 1);
    let hi = (k..vals.len()).take_while(|&i| (vals[i] - pivot).abs() <= tol).last().unwrap_or(k - 1);
    let block = es.eigenvectors.columns(lo, hi - lo + 1).into_owned();
    let mut restricted = DMatrix::zeros(source.len(), block.ncols());
    for (r, &s) in source.iter().enumerate() {
        restricted.row_mut(r).copy_from(&block.row(s));
    }
    let energy = restricted.transpose() * restricted;
    let energy = (&energy + energy.transpose()) * 0.5;
    let (ev, z) = jacobi::jacobi_raw(&energy, DEFAULT_TOL)?;
    let mut order: Vec<usize> = (0..ev.len()).collect();
    order.sort_by(|&i, &j| ev[i].total_cmp(&ev[j]));
    let z_sorted = DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| z[(r, order[c])]);
    let mut rotated = block * z_sorted;
    jacobi::fix_column_signs(&mut rotated);
    let mut u = es.eigenvectors.columns(0, k).into_owned();
    for c in lo..k {
        u.set_column(c, &rotated.column(c - lo));
    }
    Ok(u)
}

fn is_tied(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= TIE_TOL * scale.max(f64::MIN_POSITIVE)
}

fn assemble(u: DMatrix<f64>, vals: Vec<f64>, n: usize, tie_warning: bool) -> Result<SpectralEmbedding> {
    let k = vals.len();
    let scale = vals.first().map(|v| v.abs()).unwrap_or(0.0);
    let positive = vals.iter().filter(|&&v| v > 1e-12 * scale && v > 0.0).count();
    if positive < k {
        return Err(Error::InsufficientPositiveEigenvalues { k, positive });
    }
    let nf = n as f64;
    let features = DMatrix::from_fn(n, k, |i, j| u[(i, j)] * nf * vals[j].sqrt());
    Ok(SpectralEmbedding {
        features,
        eigenvalues: vals,
        k,
        tie_warning,
    })
}

/// Rank-k spectral embedding `F = U_k diag(N √λ_i)` of a pair graph.
pub fn embed(g: &PairGraph, k: usize) -> Result<SpectralEmbedding> {
    let n = g.n_nodes();
    check_rank(k, n)?;
    let want = (k + 1).min(n);
    let (vals, vecs, full) = leading_pairs(g.weights(), want)?;
    let tie = want > k && is_tied(vals[k - 1], vals[k], vals[0].abs());
    let u = match (&full, tie) {
        (Some(es), true) => canonicalize_tie(es, k, &g.source_nodes())?,
        _ => vecs.columns(0, k).into_owned(),
    };
    assemble(u, vals[..k].to_vec(), n, tie)
}

/// Embedding of `A / |E|` for a sampled graph.
pub fn embed_sampled(g: &SampledGraph, k: usize) -> Result<SpectralEmbedding> {
    if g.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = g.n_nodes();
    if n <= DENSE_LIMIT {
        return embed(&g.to_pair_graph()?, k);
    }
    check_rank(k, n)?;
    let want = (k + 1).min(n);
    // the (k+1)-th pair only feeds the tie check, so it starts loose
    let tail = 1e-3;
    let loose = KrylovOptions {
        tail_tol: (want > k).then_some(tail),
        extra_block: 3,
        max_basis: 60,
        ..KrylovOptions::default()
    };
    let mut top = top_eigenpairs(g, want, loose)?;
    if want > k && top.values[k - 1] - top.values[k] <= 2.0 * tail * top.values[0].abs() {
        top = top_eigenpairs(g, want, KrylovOptions::default())?;
    }
    let e = g.edge_count() as f64;
    let vals: Vec<f64> = top.values.iter().map(|v| v / e).collect();
    let tie = want > k && is_tied(vals[k - 1], vals[k], vals[0].abs());
    assemble(top.vectors.columns(0, k).into_owned(), vals[..k].to_vec(), n, tie)
}

/// Spectral contrastive loss of features `f` on a pair graph:
/// `-2 Σ W[x][x'] f_x·f_x' + Σ w_x w_x' (f_x·f_x')²` with `w` the marginal.
pub fn spectral_contrastive_loss(g: &PairGraph, f: &DMatrix<f64>) -> Result<f64> {
    let n = g.n_nodes();
    if f.nrows() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} feature rows"),
            found: f.nrows().to_string(),
        });
    }
    let w = g.weights();
    let marginal: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    let gram = f * f.transpose();
    let mut attract = 0.0;
    let mut repel = 0.0;
    for i in 0..n {
        for j in 0..n {
            attract += w[(i, j)] * gram[(i, j)];
            repel += marginal[i] * marginal[j] * gram[(i, j)].powi(2);
        }
    }
    Ok(-2.0 * attract + repel)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerturbationBound {
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub bound: f64,
    /// `‖A - Ã‖ < λ̃_k - λ̃_{k+1}`.
    pub applicable: bool,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub diff_norm: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub gap: f64,
}

/// `(1 + (2‖A-Ã‖ + 2‖Ã‖) / (gap - ‖A-Ã‖)) ‖A-Ã‖`.
pub fn perturbation_rhs(diff_norm: f64, tilde_norm: f64, gap: f64) -> PerturbationBound {
    let bound = if diff_norm == 0.0 {
        0.0
    } else {
        (1.0 + (2.0 * diff_norm + 2.0 * tilde_norm) / (gap - diff_norm)) * diff_norm
    };
    PerturbationBound {
        bound,
        applicable: diff_norm < gap,
        diff_norm,
        gap,
    }
}

pub fn rank_k_perturbation_bound(a: &DMatrix<f64>, a_tilde: &DMatrix<f64>, k: usize) -> Result<PerturbationBound> {
    if a.shape() != a_tilde.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a_tilde.shape()),
            found: format!("{:?}", a.shape()),
        });
    }
    let n = a.nrows();
    if k == 0 || k >= n {
        return Err(Error::RankOutOfRange { k, max: n.saturating_sub(1) });
    }
    let es = symmetric_eigensystem(a_tilde, DEFAULT_TOL)?;
    let gap = es.eigenvalues[k - 1] - es.eigenvalues[k];
    let tilde_norm = es.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diff_norm = operator_norm(&(a - a_tilde))?;
    Ok(perturbation_rhs(diff_norm, tilde_norm, gap))
}

/// `‖U Λ Uᵀ - V M Vᵀ‖₂` for two low-rank symmetric factorizations with
/// orthonormal `U` and `V`.
pub fn low_rank_difference_norm(u: &DMatrix<f64>, lu: &[f64], v: &DMatrix<f64>, lv: &[f64]) -> Result<f64> {
    let n = u.nrows();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in u.column_iter().chain(v.column_iter()) {
        let mut w: Vec<f64> = col.iter().copied().collect();
        let before = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = q.iter().zip(&w).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let after = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if after > 1e-10 * before.max(1e-300) {
            w.iter_mut().for_each(|x| *x /= after);
            basis.push(w);
        }
    }
    let q = DMatrix::from_fn(n, basis.len(), |i, j| basis[j][i]);
    let qu = q.transpose() * u;
    let qv = q.transpose() * v;
    let lu_m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(lu));
    let lv_m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(lv));
    let c = &qu * lu_m * qu.transpose() - &qv * lv_m * qv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    operator_norm(&c)
}
