//! End-to-end pipelines built from the graph, spectral and probe modules.

mod connectivity;
mod sweep;

pub use connectivity::{
    fit_connectivity, paper_table_fit, paper_tables, BetaConvention, ConnectivityRecord, ConventionFit, FitResult,
    records_for, PaperPair, PaperTableReport, PublishedFit, ACCURACY_FLOOR_PP, PUBLISHED_FIT,
};
pub use sweep::{ablate_cross_edges, ablation_sweep, derive_seed, linspace, sweep, write_csv, SweepRow, SweepSpec, Vary, CSV_HEADER};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::baselines::{contrastive_pipeline_separation, dann_construction, erm_minimizer, erm_oracle_completion};
use crate::error::{Error, Result};
use crate::graph::{
    build_separation_kernel, build_toy_kernel, positive_pair_graph, separation_pair_params, PairGraph,
    SeparationKernelParams, ToyKernelParams,
};
use crate::numfmt;
use crate::probe::{class_ids, disentanglement_cosines, domain_probe, fit_on_nodes, predict, zero_one_error, Cosines};
use crate::sbm::{expected_adjacency, sample_adjacency, SampledGraph, SbmParams};
use crate::spectral::{embed, embed_sampled, operator_norm_with, KrylovOptions, SpectralEmbedding, SymOp};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToyReport {
    #[serde(serialize_with = "numfmt::ser_opt_f64")]
    pub target_error: Option<f64>,
    #[serde(serialize_with = "numfmt::ser_opt_f64")]
    pub domain_error: Option<f64>,
    /// Eigenvalue ties or too few positive eigenvalues for k = 3.
    pub degenerate: bool,
    #[serde(serialize_with = "numfmt::ser_vec")]
    pub eigenvalues: Vec<f64>,
    /// Per-node coordinates along the two non-constant feature directions.
    #[serde(serialize_with = "numfmt::ser_vec_vec")]
    pub geometry: Vec<Vec<f64>>,
    pub predicted_classes: Vec<usize>,
}

/// Toy kernel, k = 3 embedding, probe on the sketch nodes.
pub fn run_toy(p: &ToyKernelParams, eta: f64) -> Result<ToyReport> {
    let g = positive_pair_graph(&build_toy_kernel(p)?)?;
    let emb = match embed(&g, 3) {
        Ok(e) => e,
        Err(Error::InsufficientPositiveEigenvalues { .. }) => {
            return Ok(ToyReport {
                target_error: None,
                domain_error: None,
                degenerate: true,
                eigenvalues: Vec::new(),
                geometry: Vec::new(),
                predicted_classes: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let ids = class_ids(g.labels());
    let pw = fit_on_nodes(&emb, &ids, 2, &g.source_nodes(), eta)?;
    let pred = predict(&emb, &pw)?;
    let target_error = zero_one_error(&pred.classes, &ids, &g.target_nodes())?;
    let domain_error = domain_probe(&emb, g.labels(), eta)?.domain_error;
    let geometry = (0..4).map(|i| vec![emb.features[(i, 1)], emb.features[(i, 2)]]).collect();
    Ok(ToyReport {
        target_error: Some(target_error),
        domain_error: Some(domain_error),
        degenerate: emb.tie_warning,
        eigenvalues: emb.eigenvalues.clone(),
        geometry,
        predicted_classes: pred.classes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationReport {
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub erm_err: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub erm_err_oracle_completion: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub dann_err: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub dann_domain_term: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub contrastive_err: f64,
    pub condition_alpha_gt_gamma_plus_beta: bool,
}

pub fn run_separation(p: &SeparationKernelParams, lambda: f64, eta: f64) -> Result<SeparationReport> {
    let k = build_separation_kernel(p)?;
    let truth = class_ids(k.labels());
    let target: Vec<usize> = (2..8).collect();
    let erm = erm_minimizer(&k, 1)?;
    let oracle = erm_oracle_completion(&k, 1)?;
    let dann = dann_construction(&k, lambda)?;
    let contrastive = contrastive_pipeline_separation(&k, 3, eta)?;
    Ok(SeparationReport {
        erm_err: zero_one_error(&erm.classes(), &truth, &target)?,
        erm_err_oracle_completion: zero_one_error(&oracle.classes(), &truth, &target)?,
        dann_err: zero_one_error(&dann.predictor.classes(), &truth, &target)?,
        dann_domain_term: dann.domain_term_value,
        contrastive_err: contrastive.target_error,
        condition_alpha_gt_gamma_plus_beta: separation_pair_params(p).transfer_condition(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub params: SbmParams,
    pub k: usize,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub eta: f64,
    pub seed: Option<u64>,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub target_error: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub domain_error: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub src_vs_tgt_cos: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub src_vs_dom_cos: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub tgt_vs_dom_cos: f64,
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub scaling_factor_empirical: f64,
    /// `‖A - Ã‖₂ / √N`; zero for the expected graph.
    #[serde(serialize_with = "numfmt::ser_f64")]
    pub op_norm_deviation: f64,
    pub tie_warning: bool,
}

/// `Ã x` for the block-constant expected adjacency, in `O(N + (rm)²)`.
pub fn expected_matvec(p: &SbmParams, x: &[f64], y: &mut [f64]) {
    let blocks = p.r * p.m;
    let mut sums = vec![0.0; blocks];
    for (i, &v) in x.iter().enumerate() {
        sums[i / p.n] += v;
    }
    let block_label = |b: usize| p.label(b * p.n);
    let per_block: Vec<f64> = (0..blocks)
        .map(|a| {
            (0..blocks)
                .map(|b| p.block_value(block_label(a), block_label(b)) * sums[b])
                .sum()
        })
        .collect();
    for (i, out) in y.iter_mut().enumerate() {
        *out = per_block[i / p.n];
    }
}

struct Deviation<'a> {
    g: &'a SampledGraph,
    p: SbmParams,
}

impl SymOp for Deviation<'_> {
    fn dim(&self) -> usize {
        self.g.n_nodes()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.g.matvec(x, y);
        let mut e = vec![0.0; x.len()];
        expected_matvec(&self.p, x, &mut e);
        y.iter_mut().zip(&e).for_each(|(a, b)| *a -= b);
    }

    fn apply_block(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        let mut ys = self.g.matvec_block(xs);
        let mut e = vec![0.0; self.dim()];
        for (x, y) in xs.iter().zip(ys.iter_mut()) {
            expected_matvec(&self.p, x, &mut e);
            y.iter_mut().zip(&e).for_each(|(a, b)| *a -= b);
        }
        ys
    }
}

/// `‖A - Ã‖₂` of a sampled graph against its expectation.
pub fn deviation_norm(g: &SampledGraph) -> Result<f64> {
    // single-vector Lanczos; the extreme eigenvalue is accurate well beyond
    // the residual tolerance
    let opts = KrylovOptions {
        residual_tol: 1e-3,
        extra_block: 0,
        max_basis: 100,
        ..KrylovOptions::default()
    };
    operator_norm_with(&Deviation { g, p: *g.params() }, opts)
}

fn cosines_or_nan(src: &DMatrix<f64>, tgt: &DMatrix<f64>, dom: &DMatrix<f64>) -> Cosines {
    disentanglement_cosines(src, tgt, dom).unwrap_or(Cosines {
        src_vs_tgt: f64::NAN,
        src_vs_dom: f64::NAN,
        tgt_vs_dom: f64::NAN,
    })
}

/// Probes and metrics shared by sampled and expected trials.
fn evaluate(emb: &SpectralEmbedding, g_labels: &[crate::graph::NodeLabel], r: usize, eta: f64) -> Result<(f64, f64, Cosines, f64)> {
    let ids = class_ids(g_labels);
    let source: Vec<usize> = (0..g_labels.len()).filter(|&x| g_labels[x].domain_id == 1).collect();
    let target: Vec<usize> = (0..g_labels.len()).filter(|&x| g_labels[x].domain_id != 1).collect();
    let src_probe = fit_on_nodes(emb, &ids, r, &source, eta)?;
    let pred = predict(emb, &src_probe)?;
    let target_error = zero_one_error(&pred.classes, &ids, &target)?;
    let dom = domain_probe(emb, g_labels, eta)?;
    let tgt_probe = fit_on_nodes(emb, &ids, r, &target, eta)?;
    let cos = cosines_or_nan(&src_probe.weights, &tgt_probe.weights, &dom.weights);
    let yy = 1.0 - 1.0 / r as f64;
    let mut scale = 0.0;
    for &x in &target {
        let c = ids[x] - 1;
        let dotp: f64 = (0..r)
            .map(|j| pred.scores[(x, j)] * if j == c { 1.0 - 1.0 / r as f64 } else { -1.0 / r as f64 })
            .sum();
        scale += dotp / yy;
    }
    Ok((target_error, dom.domain_error, cos, scale / target.len() as f64))
}

/// Runs the pipeline on an already sampled graph.
pub fn run_trial_on_graph(g: &SampledGraph, k: usize, eta: f64) -> Result<TrialRecord> {
    let p = *g.params();
    let emb = embed_sampled(g, k)?;
    let labels = g.labels();
    let (target_error, domain_error, cos, scaling) = evaluate(&emb, &labels, p.r, eta)?;
    let op_norm_deviation = deviation_norm(g)? / (g.n_nodes() as f64).sqrt();
    Ok(TrialRecord {
        params: p,
        k,
        eta,
        seed: Some(g.seed()),
        target_error,
        domain_error,
        src_vs_tgt_cos: cos.src_vs_tgt,
        src_vs_dom_cos: cos.src_vs_dom,
        tgt_vs_dom_cos: cos.tgt_vs_dom,
        scaling_factor_empirical: scaling,
        op_norm_deviation,
        tie_warning: emb.tie_warning,
    })
}

/// Sample, embed, probe on domain 1 and score the other domains.
pub fn run_sbm_trial(p: &SbmParams, k: usize, eta: f64, seed: u64) -> Result<TrialRecord> {
    run_trial_on_graph(&sample_adjacency(p, seed)?, k, eta)
}

/// The same pipeline on the expected adjacency, with no sampling.
pub fn run_expected_trial(p: &SbmParams, k: usize, eta: f64) -> Result<TrialRecord> {
    let g: PairGraph = expected_adjacency(p)?.to_pair_graph(1)?;
    let emb = embed(&g, k)?;
    let (target_error, domain_error, cos, scaling) = evaluate(&emb, g.labels(), p.r, eta)?;
    Ok(TrialRecord {
        params: *p,
        k,
        eta,
        seed: None,
        target_error,
        domain_error,
        src_vs_tgt_cos: cos.src_vs_tgt,
        src_vs_dom_cos: cos.src_vs_dom,
        tgt_vs_dom_cos: cos.tgt_vs_dom,
        scaling_factor_empirical: scaling,
        op_norm_deviation: 0.0,
        tie_warning: emb.tie_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{effective_xi, ideal_scaling_factor};

    #[test]
    fn toy_favorable_and_flipped() {
        let good = run_toy(&ToyKernelParams::new(0.7, 0.15, 0.1, 0.05).unwrap(), 0.01).unwrap();
        assert_eq!(good.target_error, Some(0.0));
        assert_eq!(good.domain_error, Some(0.0));
        let flipped = run_toy(&ToyKernelParams::new(0.7, 0.05, 0.1, 0.15).unwrap(), 0.01).unwrap();
        assert_eq!(flipped.target_error, Some(1.0));
        let flat = run_toy(&ToyKernelParams::new(0.25, 0.25, 0.25, 0.25).unwrap(), 0.01).unwrap();
        assert!(flat.degenerate);
    }

    #[test]
    fn separation_report() {
        let p = SeparationKernelParams::new(0.6, 0.2, 0.0, 0.0).unwrap();
        let r = run_separation(&p, 1.0, 0.01).unwrap();
        assert_eq!(r.contrastive_err, 0.0);
        assert_eq!(r.erm_err, 1.0 / 3.0);
        assert_eq!(r.dann_err, 1.0 / 3.0);
        assert_eq!(r.erm_err_oracle_completion, 0.0);
        assert!((r.dann_domain_term - 0.375).abs() < 1e-12);
        assert!(r.condition_alpha_gt_gamma_plus_beta);
        let q = SeparationKernelParams::new(0.4, 0.05, 0.3, 0.1).unwrap();
        assert!(!run_separation(&q, 1.0, 0.01).unwrap().condition_alpha_gt_gamma_plus_beta);
    }

    #[test]
    fn expected_trial_hits_ideal_factor() {
        let p = SbmParams::new(3, 2, 1, 0.6, 0.4, 0.35, 0.1).unwrap();
        let eta = 0.05;
        let rec = run_expected_trial(&p, 4, eta).unwrap();
        let want = ideal_scaling_factor(&p, effective_xi(&p, eta)).unwrap();
        assert!((rec.scaling_factor_empirical - want).abs() < 1e-10);
        assert_eq!(rec.target_error, 0.0);
    }

    #[test]
    fn expected_matvec_matches_dense() {
        let p = SbmParams::new(3, 2, 4, 0.6, 0.4, 0.35, 0.1).unwrap();
        let dense = expected_adjacency(&p).unwrap().matrix;
        let x: Vec<f64> = (0..24).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut y = vec![0.0; 24];
        expected_matvec(&p, &x, &mut y);
        let want = &dense * nalgebra::DVector::from_column_slice(&x);
        for i in 0..24 {
            assert!((y[i] - want[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn small_sampled_trial_runs() {
        let p = SbmParams::new(2, 2, 40, 0.6, 0.4, 0.3, 0.1).unwrap();
        let rec = run_sbm_trial(&p, 3, 0.01, 3).unwrap();
        assert!(rec.target_error <= 0.1);
        assert!(rec.op_norm_deviation > 0.0);
    }
}
