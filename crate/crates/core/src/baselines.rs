//! ERM, DANN and contrastive predictors on the 8-node cycle.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{positive_pair_graph, separation_labels, AugmentationKernel, SEPARATION_ALPHA_PAIRS, SEPARATION_BETA_PAIRS, SEPARATION_GAMMA_PAIRS};
use crate::probe::{argmax_rows, class_ids, fit_on_nodes, predict, zero_one_error};
use crate::spectral::{embed, SpectralEmbedding};

/// Per-node scores over the two classes.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwisePredictor {
    /// `N × r`.
    pub scores: DMatrix<f64>,
    pub reachable: Vec<bool>,
}

impl PointwisePredictor {
    pub fn classes(&self) -> Vec<usize> {
        argmax_rows(&self.scores)
    }
}

fn onehot(class_id: usize, r: usize) -> Vec<f64> {
    let mut v = vec![0.0; r];
    v[class_id - 1] = 1.0;
    v
}

/// Checks the 8-node labels and zero pattern of the cycle kernel.
fn check_separation_shape(k: &AugmentationKernel) -> Result<()> {
    if k.n_nodes() != 8 || k.labels() != separation_labels().as_slice() {
        return Err(Error::param("kernel", "expected the 8-node separation layout"));
    }
    let mut allowed = DMatrix::from_element(8, 8, false);
    for i in 0..8 {
        allowed[(i, i)] = true;
    }
    for &(a, b) in SEPARATION_ALPHA_PAIRS.iter().chain(&SEPARATION_BETA_PAIRS).chain(&SEPARATION_GAMMA_PAIRS) {
        allowed[(a - 1, b - 1)] = true;
        allowed[(b - 1, a - 1)] = true;
    }
    for i in 0..8 {
        for j in 0..8 {
            if !allowed[(i, j)] && k.prob(i, j) != 0.0 {
                return Err(Error::param("kernel", format!("entry ({}, {}) must be zero", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

fn source_nodes(k: &AugmentationKernel, source_domain: usize) -> Vec<usize> {
    (0..k.n_nodes()).filter(|&x| k.labels()[x].domain_id == source_domain).collect()
}

/// Reachable nodes get the augmentation-weighted average of their source
/// parents' one-hot labels. Node 6 is completed to class 1 and node 5 to
/// class 2, which is still a minimizer because neither is reachable.
pub fn erm_minimizer(k: &AugmentationKernel, source_domain: usize) -> Result<PointwisePredictor> {
    erm_with_completion(k, source_domain, Completion::Adversarial)
}

/// Same reachable scores, with unreachable nodes given their true labels.
pub fn erm_oracle_completion(k: &AugmentationKernel, source_domain: usize) -> Result<PointwisePredictor> {
    erm_with_completion(k, source_domain, Completion::Oracle)
}

#[derive(Clone, Copy)]
enum Completion {
    Adversarial,
    Oracle,
}

fn erm_with_completion(k: &AugmentationKernel, source_domain: usize, completion: Completion) -> Result<PointwisePredictor> {
    check_separation_shape(k)?;
    let labels = k.labels();
    let sources = source_nodes(k, source_domain);
    let r = 2;
    let mut scores = DMatrix::zeros(8, r);
    let mut reachable = vec![false; 8];
    for x in 0..8 {
        let mass: f64 = sources.iter().map(|&s| k.prob(s, x)).sum();
        if mass > 0.0 {
            reachable[x] = true;
            for &s in &sources {
                let w = k.prob(s, x) / mass;
                scores[(x, labels[s].class_index())] += w;
            }
            let row = scores.row(x);
            if row[0] == row[1] {
                return Err(Error::OrderingViolated(format!(
                    "node {} has no strict majority among its source parents",
                    x + 1
                )));
            }
        } else {
            let class = match completion {
                Completion::Oracle => labels[x].class_id,
                // flip the true label
                Completion::Adversarial => 3 - labels[x].class_id,
            };
            scores.row_mut(x).copy_from_slice(&onehot(class, r));
        }
    }
    Ok(PointwisePredictor { scores, reachable })
}

/// `Σ_{x∈S} P_S(x) Σ_x' A(x'|x) ‖f(x') - e_{y_x}‖²` with uniform `P_S`.
pub fn erm_objective(k: &AugmentationKernel, pred: &PointwisePredictor, source_domain: usize) -> Result<f64> {
    let sources = source_nodes(k, source_domain);
    if sources.is_empty() {
        return Err(Error::EmptySet);
    }
    let r = pred.scores.ncols();
    let ps = 1.0 / sources.len() as f64;
    let mut total = 0.0;
    for &s in &sources {
        let target = onehot(k.labels()[s].class_id, r);
        for x in 0..k.n_nodes() {
            let w = k.prob(s, x);
            if w == 0.0 {
                continue;
            }
            let loss: f64 = (0..r).map(|c| (pred.scores[(x, c)] - target[c]).powi(2)).sum();
            total += ps * w * loss;
        }
    }
    Ok(total)
}

/// `λ · min_h (1/N) Σ_x Σ_x' A(x'|x) ‖h(φ(x')) - e_{d_x}‖²` for an encoder
/// given as a representation id per node. The best head on each
/// representation is the mass-weighted mean of domain one-hots.
pub fn dann_domain_term(k: &AugmentationKernel, representation: &[usize], lambda: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = k.n_nodes();
    if representation.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} representation ids"),
            found: representation.len().to_string(),
        });
    }
    let m = k.labels().iter().map(|l| l.domain_id).max().unwrap_or(0);
    let groups = representation.iter().max().map_or(0, |g| g + 1);
    let mut mass = vec![vec![0.0; m]; groups];
    let base = k.base_weights();
    for x in 0..n {
        let d = k.labels()[x].domain_index();
        for xp in 0..n {
            mass[representation[xp]][d] += base[x] * k.prob(x, xp);
        }
    }
    let mut heads = Vec::with_capacity(groups);
    let mut total = 0.0;
    for g_mass in &mass {
        let tot: f64 = g_mass.iter().sum();
        let head: Vec<f64> = if tot > 0.0 {
            g_mass.iter().map(|v| v / tot).collect()
        } else {
            vec![0.0; m]
        };
        for (d, &w) in g_mass.iter().enumerate() {
            let target = onehot(d + 1, m);
            let loss: f64 = head.iter().zip(&target).map(|(h, t)| (h - t).powi(2)).sum();
            total += w * loss;
        }
        heads.push(head);
    }
    Ok((lambda * total, heads))
}

/// Encoder groups of the DANN construction: `z1` on {1,3,6,7}, `z2` on
/// {2,4,5,8} (0-based representation ids 0 and 1).
pub const DANN_ENCODER: [usize; 8] = [0, 1, 0, 1, 1, 0, 0, 1];

#[derive(Clone, Debug, PartialEq)]
pub struct DannResult {
    pub predictor: PointwisePredictor,
    pub domain_term_value: f64,
    /// Optimal domain head on `z1` and `z2`.
    pub domain_heads: Vec<Vec<f64>>,
}

pub fn dann_construction(k: &AugmentationKernel, lambda: f64) -> Result<DannResult> {
    check_separation_shape(k)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", "must be positive"));
    }
    let (value, heads) = dann_domain_term(k, &DANN_ENCODER, lambda)?;
    let mut scores = DMatrix::zeros(8, 2);
    for x in 0..8 {
        scores.row_mut(x).copy_from_slice(&onehot(DANN_ENCODER[x] + 1, 2));
    }
    let sources = source_nodes(k, 1);
    let reachable = (0..8).map(|x| sources.iter().any(|&s| k.prob(s, x) > 0.0)).collect();
    Ok(DannResult {
        predictor: PointwisePredictor { scores, reachable },
        domain_term_value: value,
        domain_heads: heads,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveResult {
    pub target_error: f64,
    pub embedding: SpectralEmbedding,
    /// `α > γ + β` for the derived pair values.
    pub condition_met: bool,
    /// Largest |weight| outside the class-parity direction over `‖B‖`.
    pub off_parity_weight: f64,
}

/// Embeds the positive-pair graph with `k_dim` features and fits a ridge
/// probe on the source nodes.
pub fn contrastive_pipeline_separation(k: &AugmentationKernel, k_dim: usize, eta: f64) -> Result<ContrastiveResult> {
    check_separation_shape(k)?;
    let g = positive_pair_graph(k)?;
    let emb = embed(&g, k_dim)?;
    let ids = class_ids(g.labels());
    let pw = fit_on_nodes(&emb, &ids, 2, &g.source_nodes(), eta)?;
    let pred = predict(&emb, &pw)?;
    let target_error = zero_one_error(&pred.classes, &ids, &g.target_nodes())?;

    // Feature-space direction d with F d ∝ parity: d ∝ D⁻¹ Uᵀ p for
    // F = U D, D = diag(N √λ).
    let parity = DMatrix::from_fn(8, 1, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign / 8f64.sqrt()
    });
    let scale: Vec<f64> = emb.eigenvalues.iter().map(|l| 8.0 * l.sqrt()).collect();
    let u = DMatrix::from_fn(8, emb.k, |i, j| emb.features[(i, j)] / scale[j]);
    let coords = u.transpose() * &parity;
    let along = DMatrix::from_fn(emb.k, 1, |j, _| coords[(j, 0)] / scale[j]).normalize();
    let proj = &along * (along.transpose() * &pw.weights);
    let off = (&pw.weights - proj).amax();
    let norm = pw.weights.norm();

    let params = crate::graph::SeparationPairParams {
        rho: g.weights()[(0, 0)],
        alpha: g.weights()[(0, 2)],
        beta: g.weights()[(0, 1)],
        gamma: g.weights()[(0, 3)],
        normalizer: 1.0,
    };
    Ok(ContrastiveResult {
        target_error,
        embedding: emb,
        condition_met: params.transfer_condition(),
        off_parity_weight: if norm > 0.0 { off / norm } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_separation_kernel, SeparationKernelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel(r: f64, a: f64, b: f64, g: f64) -> AugmentationKernel {
        build_separation_kernel(&SeparationKernelParams::new(r, a, b, g).unwrap()).unwrap()
    }

    fn truth() -> Vec<usize> {
        class_ids(&separation_labels())
    }

    const TARGET: [usize; 6] = [2, 3, 4, 5, 6, 7];

    #[test]
    fn erm_target_error_is_one_third() {
        for k in [kernel(0.4, 0.15, 0.1, 0.1), kernel(0.6, 0.2, 0.0, 0.0), kernel(0.5, 0.12, 0.1, 0.08)] {
            let p = erm_minimizer(&k, 1).unwrap();
            let err = zero_one_error(&p.classes(), &truth(), &TARGET).unwrap();
            assert_eq!(err, 1.0 / 3.0);
            for x in [2, 3, 6, 7] {
                assert_eq!(p.classes()[x], truth()[x]);
            }
            assert_eq!(p.reachable, vec![true, true, true, true, false, false, true, true]);
            let o = erm_oracle_completion(&k, 1).unwrap();
            assert_eq!(zero_one_error(&o.classes(), &truth(), &TARGET).unwrap(), 0.0);
        }
    }

    #[test]
    fn erm_objective_is_minimal() {
        let k = kernel(0.4, 0.15, 0.1, 0.1);
        let p = erm_minimizer(&k, 1).unwrap();
        let best = erm_objective(&k, &p, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mut q = p.clone();
            for x in 0..8 {
                if q.reachable[x] {
                    for c in 0..2 {
                        q.scores[(x, c)] += 0.1 * (rng.random::<f64>() - 0.5);
                    }
                }
            }
            assert!(erm_objective(&k, &q, 1).unwrap() > best);
        }
    }

    #[test]
    fn erm_objective_brute_force() {
        let k = kernel(0.4, 0.15, 0.1, 0.1);
        let p = erm_minimizer(&k, 1).unwrap();
        let mut want = 0.0;
        for s in 0..2usize {
            for x in 0..8 {
                let t = if s == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
                want += 0.5 * k.prob(s, x) * ((p.scores[(x, 0)] - t[0]).powi(2) + (p.scores[(x, 1)] - t[1]).powi(2));
            }
        }
        assert!((erm_objective(&k, &p, 1).unwrap() - want).abs() < 1e-12);
        let flat = PointwisePredictor {
            scores: DMatrix::from_element(8, 2, 0.5),
            reachable: p.reachable.clone(),
        };
        assert!((erm_objective(&k, &flat, 1).unwrap() - 0.5).abs() < 1e-12);
        let id = kernel(1.0, 0.0, 0.0, 0.0);
        let perfect = erm_oracle_completion(&id, 1).unwrap();
        assert_eq!(erm_objective(&id, &perfect, 1).unwrap(), 0.0);
    }

    #[test]
    fn dann_term_and_heads() {
        for k in [kernel(0.4, 0.15, 0.1, 0.1), kernel(0.6, 0.2, 0.0, 0.0)] {
            let d = dann_construction(&k, 1.0).unwrap();
            assert!((d.domain_term_value - 0.375).abs() < 1e-12);
            for h in &d.domain_heads {
                assert!((h[0] - 0.25).abs() < 1e-12 && (h[1] - 0.75).abs() < 1e-12);
            }
            let err = zero_one_error(&d.predictor.classes(), &truth(), &TARGET).unwrap();
            assert_eq!(err, 1.0 / 3.0);
            let d2 = dann_construction(&k, 2.0).unwrap();
            assert!((d2.domain_term_value - 0.75).abs() < 1e-12);
        }
        assert!(dann_construction(&kernel(0.6, 0.2, 0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn dann_term_is_an_upper_bound() {
        let k = kernel(0.4, 0.15, 0.1, 0.1);
        let (best, _) = dann_domain_term(&k, &DANN_ENCODER, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let enc: Vec<usize> = (0..8).map(|_| rng.random_range(0..4)).collect();
            assert!(dann_domain_term(&k, &enc, 1.0).unwrap().0 <= best + 1e-12);
        }
        let relabeled: Vec<usize> = DANN_ENCODER.iter().map(|g| 5 - 3 * g).collect();
        assert!((dann_domain_term(&k, &relabeled, 1.0).unwrap().0 - best).abs() < 1e-12);
    }

    #[test]
    fn contrastive_transfers_when_alpha_dominates() {
        let r = contrastive_pipeline_separation(&kernel(0.6, 0.2, 0.0, 0.0), 3, 0.01).unwrap();
        assert!(r.condition_met);
        assert_eq!(r.target_error, 0.0);
        assert!(r.off_parity_weight < 1e-8);
    }

    #[test]
    fn identity_kernel_is_degenerate() {
        assert!(contrastive_pipeline_separation(&kernel(1.0, 0.0, 0.0, 0.0), 3, 0.01).is_err()
            || contrastive_pipeline_separation(&kernel(1.0, 0.0, 0.0, 0.0), 3, 0.01).unwrap().embedding.tie_warning);
    }

    #[test]
    fn rejects_wrong_shape() {
        let toy = crate::graph::build_toy_kernel(&crate::graph::ToyKernelParams::new(0.7, 0.15, 0.1, 0.05).unwrap()).unwrap();
        assert!(erm_minimizer(&toy, 1).is_err());
    }
}
