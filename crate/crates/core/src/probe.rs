//! Ridge probes on frozen features.
//!
//! The loss is the per-sample sum `Σ_{x∈S} ‖Bᵀf(x) - y(x)‖² + η|S| ‖B‖²`,
//! so the closed form is `B = (F_SᵀF_S + η|S| I)⁻¹ F_SᵀY_S`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::NodeLabel;
use crate::numfmt;
use crate::graph::PairGraph;
use crate::spectral::{embed, rank_k_canonical, symmetric_eigensystem, SpectralEmbedding, DEFAULT_TOL};

/// Singular values below this fraction of the largest are dropped by the
/// pseudoinverse.
pub const PINV_RTOL: f64 = 1e-12;

/// `e_c - (1/r) 1`.
pub fn mean_zero_onehot(class_id: usize, r: usize) -> Result<Vec<f64>> {
    if class_id == 0 || class_id > r {
        return Err(Error::param("class_id", format!("must lie in 1..={r}")));
    }
    let mut v = vec![-1.0 / r as f64; r];
    v[class_id - 1] += 1.0;
    Ok(v)
}

/// Rows `e_{id(x)} - (1/r) 1` for the given nodes.
pub fn label_matrix(ids: &[usize], nodes: &[usize], r: usize) -> Result<DMatrix<f64>> {
    let mut y = DMatrix::zeros(nodes.len(), r);
    for (row, &x) in nodes.iter().enumerate() {
        let v = mean_zero_onehot(ids[x], r)?;
        y.row_mut(row).copy_from_slice(&v);
    }
    Ok(y)
}

pub fn class_ids(labels: &[NodeLabel]) -> Vec<usize> {
    labels.iter().map(|l| l.class_id).collect()
}

pub fn domain_ids(labels: &[NodeLabel]) -> Vec<usize> {
    labels.iter().map(|l| l.domain_id).collect()
}

/// Converts the averaged-loss strength (`η'‖B‖²` next to a mean over
/// samples) into the per-sample convention used here.
pub fn eta_from_averaged(eta_averaged: f64, n_source: usize) -> f64 {
    eta_averaged / n_source as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeWeights {
    /// `k × r`.
    pub weights: DMatrix<f64>,
    pub eta: f64,
    pub trained_on: Vec<usize>,
}

/// Closed-form ridge fit on the rows of `features_s`.
pub fn ridge_fit(features_s: &DMatrix<f64>, labels_s: &DMatrix<f64>, eta: f64) -> Result<ProbeWeights> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::NonPositiveEta(eta));
    }
    let s = features_s.nrows();
    if s == 0 {
        return Err(Error::EmptySet);
    }
    if labels_s.nrows() != s {
        return Err(Error::ShapeMismatch {
            expected: format!("{s} label rows"),
            found: labels_s.nrows().to_string(),
        });
    }
    let k = features_s.ncols();
    let ft = features_s.transpose();
    let mut gram = &ft * features_s;
    for i in 0..k {
        gram[(i, i)] += eta * s as f64;
    }
    let rhs = &ft * labels_s;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("ridge normal matrix is not positive definite".into()))?;
    Ok(ProbeWeights {
        weights: chol.solve(&rhs),
        eta,
        trained_on: Vec::new(),
    })
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Fits a probe on `nodes` of an embedding against the given ids.
pub fn fit_on_nodes(emb: &SpectralEmbedding, ids: &[usize], n_labels: usize, nodes: &[usize], eta: f64) -> Result<ProbeWeights> {
    if nodes.is_empty() {
        return Err(Error::EmptySet);
    }
    let f = select_rows(&emb.features, nodes);
    let y = label_matrix(ids, nodes, n_labels)?;
    let mut pw = ridge_fit(&f, &y, eta)?;
    pw.trained_on = nodes.to_vec();
    Ok(pw)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// `N × r` score matrix `F B`.
    pub scores: DMatrix<f64>,
    /// 1-based argmax per node, ties to the lowest index.
    pub classes: Vec<usize>,
}

pub fn argmax_rows(scores: &DMatrix<f64>) -> Vec<usize> {
    scores
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best + 1
        })
        .collect()
}

pub fn predict(emb: &SpectralEmbedding, pw: &ProbeWeights) -> Result<Prediction> {
    if emb.features.ncols() != pw.weights.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} weight rows", emb.features.ncols()),
            found: pw.weights.nrows().to_string(),
        });
    }
    let scores = &emb.features * &pw.weights;
    let classes = argmax_rows(&scores);
    Ok(Prediction { scores, classes })
}

/// Moore-Penrose inverse of a symmetric matrix.
pub fn symmetric_pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let es = symmetric_eigensystem(m, DEFAULT_TOL)?;
    let smax = es.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in es.eigenvalues.iter().enumerate() {
        if lam.abs() > PINV_RTOL * smax && lam != 0.0 {
            let u = es.eigenvectors.column(i);
            out += (u * u.transpose()) / lam;
        }
    }
    Ok(out)
}

/// Target scores computed straight from the blocks of the rank-k matrix:
/// `M_k[T,S] (M_k[S,S] + (ΣM / N²) η |S| I)⁺ Y_S`.
pub fn closed_form_target_prediction(
    m: &DMatrix<f64>,
    k: usize,
    eta: f64,
    source: &[usize],
    target: &[usize],
    labels_s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if !(eta > 0.0) {
        return Err(Error::NonPositiveEta(eta));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = m.nrows() as f64;
    let mk = rank_k_canonical(m, k, source)?;
    let xi = m.sum() / (n * n) * eta * source.len() as f64;
    let mut ss = DMatrix::from_fn(source.len(), source.len(), |i, j| mk[(source[i], source[j])]);
    for i in 0..source.len() {
        ss[(i, i)] += xi;
    }
    let ss = (&ss + ss.transpose()) * 0.5;
    let ts = DMatrix::from_fn(target.len(), source.len(), |i, j| mk[(target[i], source[j])]);
    Ok(ts * symmetric_pinv(&ss)? * labels_s)
}

/// Largest gap between the ridge path and the closed-form path on the
/// target rows of a pair graph.
pub fn dual_path_deviation(g: &PairGraph, k: usize, eta: f64) -> Result<f64> {
    let emb = embed(g, k)?;
    let ids = class_ids(g.labels());
    let r = g.n_classes();
    let source = g.source_nodes();
    let target = g.target_nodes();
    let pred = predict(&emb, &fit_on_nodes(&emb, &ids, r, &source, eta)?)?;
    let ys = label_matrix(&ids, &source, r)?;
    let cf = closed_form_target_prediction(g.weights(), k, eta, &source, &target, &ys)?;
    let mut worst = 0.0_f64;
    for (i, &x) in target.iter().enumerate() {
        for j in 0..r {
            worst = worst.max((pred.scores[(x, j)] - cf[(i, j)]).abs());
        }
    }
    Ok(worst)
}

/// Fraction of `nodes` whose predicted id differs from the true one.
pub fn zero_one_error(predicted: &[usize], truth: &[usize], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptySet);
    }
    let wrong = nodes.iter().filter(|&&x| predicted[x] != truth[x]).count();
    Ok(wrong as f64 / nodes.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainProbe {
    /// `k × m`.
    pub weights: DMatrix<f64>,
    pub domain_error: f64,
    /// More than two domains, beyond what the separation result covers.
    pub extension: bool,
}

/// Domain head fitted on class-1 nodes and scored on every node.
pub fn domain_probe(emb: &SpectralEmbedding, labels: &[NodeLabel], eta: f64) -> Result<DomainProbe> {
    let m = labels.iter().map(|l| l.domain_id).max().unwrap_or(0);
    let nodes: Vec<usize> = (0..labels.len()).filter(|&x| labels[x].class_id == 1).collect();
    for d in 1..=m {
        if !nodes.iter().any(|&x| labels[x].domain_id == d) {
            return Err(Error::Degenerate(format!("class 1 has no node in domain {d}")));
        }
    }
    let doms = domain_ids(labels);
    let pw = fit_on_nodes(emb, &doms, m, &nodes, eta)?;
    let pred = predict(emb, &pw)?;
    let all: Vec<usize> = (0..labels.len()).collect();
    Ok(DomainProbe {
        domain_error: zero_one_error(&pred.classes, &doms, &all)?,
        weights: pw.weights,
        extension: m > 2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cosines {
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub src_vs_tgt: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub src_vs_dom: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub tgt_vs_dom: f64,
}

fn cosine(a: nalgebra::DVectorView<f64>, b: nalgebra::DVectorView<f64>) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(a.dot(&b) / (na * nb))
}

/// The domain head's discriminating directions: `w_1 - w_2` for two
/// domains, every column otherwise.
fn domain_directions(dom: &DMatrix<f64>) -> Vec<nalgebra::DVector<f64>> {
    if dom.ncols() == 2 {
        vec![dom.column(0) - dom.column(1)]
    } else {
        dom.column_iter().map(|c| c.into_owned()).collect()
    }
}

/// Mean per-class cosine between source and target heads, and mean
/// absolute cosine between each class head and the domain directions.
pub fn disentanglement_cosines(src: &DMatrix<f64>, tgt: &DMatrix<f64>, dom: &DMatrix<f64>) -> Result<Cosines> {
    if src.shape() != tgt.shape() || src.nrows() != dom.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?} heads", src.shape()),
            found: format!("{:?} / {:?}", tgt.shape(), dom.shape()),
        });
    }
    let r = src.ncols();
    let mut st = 0.0;
    for c in 0..r {
        st += cosine(src.column(c), tgt.column(c))?;
    }
    let dirs = domain_directions(dom);
    let against = |head: &DMatrix<f64>| -> Result<f64> {
        let mut total = 0.0;
        for c in 0..r {
            for d in &dirs {
                total += cosine(head.column(c), d.column(0))?.abs();
            }
        }
        Ok(total / (r * dirs.len()) as f64)
    };
    Ok(Cosines {
        src_vs_tgt: st / r as f64,
        src_vs_dom: against(src)?,
        tgt_vs_dom: against(tgt)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_toy_kernel, positive_pair_graph, ToyKernelParams};
    use crate::spectral::embed;
    use proptest::prelude::*;

    #[test]
    fn onehot_examples() {
        assert_eq!(mean_zero_onehot(1, 2).unwrap(), vec![0.5, -0.5]);
        assert_eq!(mean_zero_onehot(2, 2).unwrap(), vec![-0.5, 0.5]);
        assert_eq!(mean_zero_onehot(3, 4).unwrap(), vec![-0.25, -0.25, 0.75, -0.25]);
        assert!(mean_zero_onehot(0, 2).is_err());
        assert!(mean_zero_onehot(3, 2).is_err());
    }

    #[test]
    fn ridge_limits() {
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let y = DMatrix::from_row_slice(1, 2, &[0.5, -0.5]);
        let tiny = ridge_fit(&f, &y, 1e-12).unwrap();
        let s = &f * &tiny.weights;
        assert!((s[(0, 0)] - 0.5).abs() < 1e-9 && (s[(0, 1)] + 0.5).abs() < 1e-9);
        let huge = ridge_fit(&f, &y, 1e12).unwrap();
        assert!(huge.weights.amax() < 1e-12);
        assert!(matches!(ridge_fit(&f, &y, 0.0), Err(Error::NonPositiveEta(_))));
    }

    fn toy_setup() -> (crate::graph::PairGraph, SpectralEmbedding) {
        let g = positive_pair_graph(&build_toy_kernel(&ToyKernelParams::new(0.7, 0.15, 0.1, 0.05).unwrap()).unwrap()).unwrap();
        let emb = embed(&g, 3).unwrap();
        (g, emb)
    }

    #[test]
    fn toy_probe_transfers() {
        let (g, emb) = toy_setup();
        let ids = class_ids(g.labels());
        let pw = fit_on_nodes(&emb, &ids, 2, &g.source_nodes(), 0.01).unwrap();
        let pred = predict(&emb, &pw).unwrap();
        assert_eq!(pred.classes, vec![1, 2, 1, 2]);
    }

    #[test]
    fn zero_weights_predict_class_one() {
        let (_, emb) = toy_setup();
        let pw = ProbeWeights {
            weights: DMatrix::zeros(3, 2),
            eta: 1.0,
            trained_on: vec![],
        };
        let pred = predict(&emb, &pw).unwrap();
        assert!(pred.scores.iter().all(|&v| v == 0.0));
        assert_eq!(pred.classes, vec![1; 4]);
    }

    #[test]
    fn dual_paths_agree_on_toy() {
        let (g, emb) = toy_setup();
        let ids = class_ids(g.labels());
        let (s, t) = (g.source_nodes(), g.target_nodes());
        let pw = fit_on_nodes(&emb, &ids, 2, &s, 0.05).unwrap();
        let pred = predict(&emb, &pw).unwrap();
        let ys = label_matrix(&ids, &s, 2).unwrap();
        let direct = closed_form_target_prediction(g.weights(), 3, 0.05, &s, &t, &ys).unwrap();
        for (i, &x) in t.iter().enumerate() {
            for c in 0..2 {
                assert!((pred.scores[(x, c)] - direct[(i, c)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn huge_eta_shrinks_closed_form() {
        let (g, _) = toy_setup();
        let ids = class_ids(g.labels());
        let ys = label_matrix(&ids, &g.source_nodes(), 2).unwrap();
        let p = closed_form_target_prediction(g.weights(), 3, 1e9, &g.source_nodes(), &g.target_nodes(), &ys).unwrap();
        assert!(p.amax() < 1e-8);
    }

    #[test]
    fn zero_one_examples() {
        assert_eq!(zero_one_error(&[1, 2, 1], &[1, 2, 1], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(zero_one_error(&[2, 1, 2], &[1, 2, 1], &[0, 1, 2]).unwrap(), 1.0);
        assert!(zero_one_error(&[1], &[1], &[]).is_err());
    }

    #[test]
    fn toy_domain_probe_separates() {
        let (g, emb) = toy_setup();
        let dp = domain_probe(&emb, g.labels(), 0.01).unwrap();
        assert_eq!(dp.domain_error, 0.0);
        assert!(!dp.extension);
    }

    #[test]
    fn domain_blind_features_give_half_error() {
        let (g, emb) = toy_setup();
        let mut blind = emb.clone();
        for i in 0..4 {
            blind.features[(i, 2)] = 0.0;
        }
        let dp = domain_probe(&blind, g.labels(), 0.01).unwrap();
        assert_eq!(dp.domain_error, 0.5);
    }

    #[test]
    fn cosine_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]);
        let c = disentanglement_cosines(&a, &a, &d).unwrap();
        assert!((c.src_vs_tgt - 1.0).abs() < 1e-15);
        assert_eq!(c.src_vs_dom, 0.0);
        assert_eq!(c.tgt_vs_dom, 0.0);
        let zero = DMatrix::zeros(2, 2);
        assert!(matches!(disentanglement_cosines(&zero, &a, &d), Err(Error::ZeroNorm)));
    }

    proptest! {
        #[test]
        fn label_rows_sum_to_zero(r in 2usize..8, c in 1usize..8) {
            prop_assume!(c <= r);
            let v = mean_zero_onehot(c, r).unwrap();
            prop_assert!(v.iter().sum::<f64>().abs() < 1e-12);
            prop_assert_eq!(v.iter().filter(|&&x| (x - (1.0 - 1.0 / r as f64)).abs() < 1e-15).count(), 1);
        }

        #[test]
        fn rotation_leaves_predictions(theta in 0.0f64..std::f64::consts::TAU, phi in 0.0f64..std::f64::consts::TAU) {
            let (g, emb) = toy_setup();
            let (ct, st, cp, sp) = (theta.cos(), theta.sin(), phi.cos(), phi.sin());
            let rz = DMatrix::from_row_slice(3, 3, &[ct, -st, 0.0, st, ct, 0.0, 0.0, 0.0, 1.0]);
            let rx = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp]);
            let rotated = emb.rotated(&(rz * rx));
            let ids = class_ids(g.labels());
            let s = g.source_nodes();
            let a = predict(&emb, &fit_on_nodes(&emb, &ids, 2, &s, 0.02).unwrap()).unwrap();
            let b = predict(&rotated, &fit_on_nodes(&rotated, &ids, 2, &s, 0.02).unwrap()).unwrap();
            prop_assert!((a.scores - b.scores).amax() < 1e-10);
            prop_assert_eq!(a.classes, b.classes);
        }
    }
}
