//! Finite augmentation kernels and the positive-pair graphs they induce.
//!
//! Node, class and domain ids are 1-based in every public type and in the
//! JSON schema. Matrix indices are 0-based.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt;

const ROW_SUM_TOL: f64 = 1e-12;
const PAIR_SUM_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-14;

/// Names of the four toy nodes, in matrix order.
pub const TOY_NODE_NAMES: [&str; 4] = [
    "clock-sketch",
    "butterfly-sketch",
    "clock-photo",
    "butterfly-photo",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeLabel {
    pub class_id: usize,
    pub domain_id: usize,
}

impl NodeLabel {
    pub fn new(class_id: usize, domain_id: usize) -> Self {
        Self {
            class_id,
            domain_id,
        }
    }

    pub fn class_index(&self) -> usize {
        self.class_id - 1
    }

    pub fn domain_index(&self) -> usize {
        self.domain_id - 1
    }
}

pub(crate) fn validate_labels(labels: &[NodeLabel]) -> Result<(usize, usize)> {
    if labels.is_empty() {
        return Err(Error::EmptySet);
    }
    if labels.iter().any(|l| l.class_id == 0 || l.domain_id == 0) {
        return Err(Error::param("labels", "class and domain ids are 1-based"));
    }
    let r = labels.iter().map(|l| l.class_id).max().unwrap_or(0);
    let m = labels.iter().map(|l| l.domain_id).max().unwrap_or(0);
    Ok((r, m))
}

/// Per-node augmentation distribution `K[x][x'] = A(x' | x)` plus the
/// unlabeled marginal over original inputs.
#[derive(Clone, Debug)]
pub struct AugmentationKernel {
    labels: Vec<NodeLabel>,
    kernel: DMatrix<f64>,
    base_weights: Vec<f64>,
}

impl AugmentationKernel {
    pub fn new(labels: Vec<NodeLabel>, kernel: DMatrix<f64>, base_weights: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        validate_labels(&labels)?;
        if kernel.nrows() != n || kernel.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", kernel.nrows(), kernel.ncols()),
            });
        }
        if base_weights.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} base weights"),
                found: base_weights.len().to_string(),
            });
        }
        if kernel.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("kernel", "entries must be finite and nonnegative"));
        }
        for (i, row) in kernel.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotNormalized {
                    what: format!("kernel row {}", i + 1),
                    sum: s,
                });
            }
        }
        if base_weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::param("base_weights", "entries must be nonnegative"));
        }
        let s: f64 = base_weights.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotNormalized {
                what: "base_weights".into(),
                sum: s,
            });
        }
        Ok(Self {
            labels,
            kernel,
            base_weights,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[NodeLabel] {
        &self.labels
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    /// `A(to | from)` with 0-based indices.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.kernel[(from, to)]
    }
}

fn check_nonneg(values: [(&str, f64); 4]) -> Result<()> {
    for (name, v) in values {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::param(name, format!("must be finite and nonnegative, got {v}")));
        }
    }
    Ok(())
}

fn ordered(rho: f64, alpha: f64, beta: f64, gamma: f64) -> bool {
    let distinct = [rho, alpha, beta, gamma]
        .iter()
        .enumerate()
        .all(|(i, a)| [rho, alpha, beta, gamma][i + 1..].iter().all(|b| a != b));
    rho > alpha.max(beta) && alpha.min(beta) > gamma && distinct
}

/// Augmentation probabilities of the 4-node example: keep (ρ′), change
/// domain (α′), change class (β′), change both (γ′).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyKernelParams {
    pub rho_p: f64,
    pub alpha_p: f64,
    pub beta_p: f64,
    pub gamma_p: f64,
}

impl ToyKernelParams {
    pub fn new(rho_p: f64, alpha_p: f64, beta_p: f64, gamma_p: f64) -> Result<Self> {
        let p = Self {
            rho_p,
            alpha_p,
            beta_p,
            gamma_p,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg([
            ("rho_p", self.rho_p),
            ("alpha_p", self.alpha_p),
            ("beta_p", self.beta_p),
            ("gamma_p", self.gamma_p),
        ])?;
        let s = self.rho_p + self.alpha_p + self.beta_p + self.gamma_p;
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotNormalized {
                what: "rho_p + alpha_p + beta_p + gamma_p".into(),
                sum: s,
            });
        }
        Ok(())
    }

    /// ρ′ > max{α′, β′}, min{α′, β′} > γ′ and all four values distinct.
    pub fn satisfies_ordering(&self) -> bool {
        ordered(self.rho_p, self.alpha_p, self.beta_p, self.gamma_p)
    }
}

/// Augmentation probabilities of the 8-node cycle. Each row has one self
/// entry, two same-class neighbours, one β′ partner and two γ′ neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationKernelParams {
    pub rho_p: f64,
    pub alpha_p: f64,
    pub beta_p: f64,
    pub gamma_p: f64,
}

impl SeparationKernelParams {
    pub fn new(rho_p: f64, alpha_p: f64, beta_p: f64, gamma_p: f64) -> Result<Self> {
        let p = Self {
            rho_p,
            alpha_p,
            beta_p,
            gamma_p,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg([
            ("rho_p", self.rho_p),
            ("alpha_p", self.alpha_p),
            ("beta_p", self.beta_p),
            ("gamma_p", self.gamma_p),
        ])?;
        let s = self.rho_p + 2.0 * self.alpha_p + self.beta_p + 2.0 * self.gamma_p;
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotNormalized {
                what: "rho_p + 2 alpha_p + beta_p + 2 gamma_p".into(),
                sum: s,
            });
        }
        Ok(())
    }

    pub fn satisfies_ordering(&self) -> bool {
        ordered(self.rho_p, self.alpha_p, self.beta_p, self.gamma_p)
    }
}

/// Symmetric joint distribution over ordered node pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGraph {
    labels: Vec<NodeLabel>,
    weights: DMatrix<f64>,
    source_domain: usize,
}

impl PairGraph {
    pub fn new(labels: Vec<NodeLabel>, weights: DMatrix<f64>, source_domain: usize) -> Result<Self> {
        let n = labels.len();
        let (_, m) = validate_labels(&labels)?;
        if weights.nrows() != n || weights.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", weights.nrows(), weights.ncols()),
            });
        }
        if source_domain == 0 || source_domain > m {
            return Err(Error::param("source_domain", format!("must lie in 1..={m}")));
        }
        if weights.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("weights", "entries must be finite and nonnegative"));
        }
        let asym = max_asymmetry(&weights);
        if asym > SYMMETRY_TOL {
            return Err(Error::NonSymmetric {
                max_asymmetry: asym,
            });
        }
        let s = weights.sum();
        if (s - 1.0).abs() > PAIR_SUM_TOL {
            return Err(Error::NotNormalized {
                what: "pair weights".into(),
                sum: s,
            });
        }
        Ok(Self {
            labels,
            weights,
            source_domain,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[NodeLabel] {
        &self.labels
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn source_domain(&self) -> usize {
        self.source_domain
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().map(|l| l.class_id).max().unwrap_or(0)
    }

    pub fn n_domains(&self) -> usize {
        self.labels.iter().map(|l| l.domain_id).max().unwrap_or(0)
    }

    pub fn with_source_domain(mut self, source_domain: usize) -> Result<Self> {
        if source_domain == 0 || source_domain > self.n_domains() {
            return Err(Error::param("source_domain", "out of range"));
        }
        self.source_domain = source_domain;
        Ok(self)
    }

    /// 0-based indices of nodes in the labeled domain.
    pub fn source_nodes(&self) -> Vec<usize> {
        nodes_where(&self.labels, |l| l.domain_id == self.source_domain)
    }

    pub fn target_nodes(&self) -> Vec<usize> {
        nodes_where(&self.labels, |l| l.domain_id != self.source_domain)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GraphJson {
            n: self.n_nodes(),
            labels: self.labels.iter().map(|l| [l.class_id, l.domain_id]).collect(),
            weights: Some(row_major(&self.weights)),
            edges: None,
            source_domain: self.source_domain,
            seed: None,
            edge_count: None,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphJson = serde_json::from_str(text)?;
        let n = doc.n;
        let weights = doc
            .weights
            .ok_or_else(|| Error::param("weights", "missing from pair graph JSON"))?;
        if weights.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: format!("{} weights", n * n),
                found: weights.len().to_string(),
            });
        }
        let labels = doc
            .labels
            .iter()
            .map(|&[c, d]| NodeLabel::new(c, d))
            .collect();
        PairGraph::new(labels, DMatrix::from_row_slice(n, n, &weights), doc.source_domain)
    }
}

pub(crate) fn nodes_where(labels: &[NodeLabel], pred: impl Fn(&NodeLabel) -> bool) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, l)| pred(l))
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Shared JSON layout for pair graphs and sampled graphs.
#[derive(Serialize, Deserialize)]
pub(crate) struct GraphJson {
    pub n: usize,
    pub labels: Vec<[usize; 2]>,
    #[serde(
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_opt_vec",
        default
    )]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub edges: Option<Vec<[usize; 2]>>,
    pub source_domain: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub edge_count: Option<u64>,
}

fn ser_opt_vec<S: serde::Serializer>(v: &Option<Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(xs) => numfmt::ser_vec(xs, s),
        None => s.serialize_none(),
    }
}

/// Toy kernel on [clock-sketch, butterfly-sketch, clock-photo, butterfly-photo].
pub fn build_toy_kernel(p: &ToyKernelParams) -> Result<AugmentationKernel> {
    p.validate()?;
    let labels = vec![
        NodeLabel::new(1, 1),
        NodeLabel::new(2, 1),
        NodeLabel::new(1, 2),
        NodeLabel::new(2, 2),
    ];
    let kernel = DMatrix::from_fn(4, 4, |i, j| {
        let (a, b) = (labels[i], labels[j]);
        match (a.class_id == b.class_id, a.domain_id == b.domain_id) {
            (true, true) => p.rho_p,
            (true, false) => p.alpha_p,
            (false, true) => p.beta_p,
            (false, false) => p.gamma_p,
        }
    });
    AugmentationKernel::new(labels, kernel, vec![0.25; 4])
}

/// Unordered 1-based pairs carrying α′ in the 8-node cycle.
pub const SEPARATION_ALPHA_PAIRS: [(usize, usize); 8] =
    [(1, 3), (3, 5), (5, 7), (7, 1), (2, 4), (4, 6), (6, 8), (8, 2)];
pub const SEPARATION_BETA_PAIRS: [(usize, usize); 4] = [(1, 2), (3, 4), (5, 6), (7, 8)];
pub const SEPARATION_GAMMA_PAIRS: [(usize, usize); 8] =
    [(1, 4), (2, 3), (3, 6), (4, 5), (5, 8), (6, 7), (7, 2), (8, 1)];

pub fn separation_labels() -> Vec<NodeLabel> {
    (1..=8)
        .map(|x| {
            let class = if x % 2 == 1 { 1 } else { 2 };
            let domain = if x <= 2 { 1 } else { 2 };
            NodeLabel::new(class, domain)
        })
        .collect()
}

/// The 8-node kernel: source {1, 2}, target {3..8}, odd nodes class 1.
pub fn build_separation_kernel(p: &SeparationKernelParams) -> Result<AugmentationKernel> {
    p.validate()?;
    let mut kernel = DMatrix::zeros(8, 8);
    for i in 0..8 {
        kernel[(i, i)] = p.rho_p;
    }
    let mut place = |pairs: &[(usize, usize)], v: f64| {
        for &(a, b) in pairs {
            kernel[(a - 1, b - 1)] = v;
            kernel[(b - 1, a - 1)] = v;
        }
    };
    place(&SEPARATION_ALPHA_PAIRS, p.alpha_p);
    place(&SEPARATION_BETA_PAIRS, p.beta_p);
    place(&SEPARATION_GAMMA_PAIRS, p.gamma_p);
    AugmentationKernel::new(separation_labels(), kernel, vec![0.125; 8])
}

/// `S+(x, x+) = Σ_x̄ P_U(x̄) A(x | x̄) A(x+ | x̄)`, with domain 1 as source.
pub fn positive_pair_graph(k: &AugmentationKernel) -> Result<PairGraph> {
    let n = k.n_nodes();
    let kern = k.kernel();
    let w = k.base_weights();
    let mut weights = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in x..n {
            let mut s = 0.0;
            for (b, &wb) in w.iter().enumerate() {
                s += wb * kern[(b, x)] * kern[(b, y)];
            }
            weights[(x, y)] = s;
            weights[(y, x)] = s;
        }
    }
    PairGraph::new(k.labels().to_vec(), weights, 1)
}

/// Connectivity values (ρ, α, β, γ) of a block-structured pair graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairParams {
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl PairParams {
    pub fn satisfies_ordering(&self) -> bool {
        self.rho > self.alpha.max(self.beta) && self.alpha.min(self.beta) > self.gamma
    }
}

/// Closed-form toy pair probabilities, including the uniform ¼ base weight,
/// so the values equal the entries of the positive-pair graph.
pub fn toy_pair_params(p: &ToyKernelParams) -> PairParams {
    let ToyKernelParams {
        rho_p: r,
        alpha_p: a,
        beta_p: b,
        gamma_p: g,
    } = *p;
    PairParams {
        rho: (r * r + a * a + b * b + g * g) / 4.0,
        alpha: (r * a + b * g) / 2.0,
        beta: (r * b + a * g) / 2.0,
        gamma: (r * g + a * b) / 2.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationPairParams {
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// C such that 8ρ + 16α + 8β + 16γ = 1.
    pub normalizer: f64,
}

impl SeparationPairParams {
    /// α > γ + β, the condition under which the k = 3 embedding transfers.
    pub fn transfer_condition(&self) -> bool {
        self.alpha > self.gamma + self.beta
    }

    /// Unnormalized values (C = 1), which equal the corresponding entries of
    /// the brute-force positive-pair graph.
    pub fn unnormalized(&self) -> PairParams {
        PairParams {
            rho: self.rho * self.normalizer,
            alpha: self.alpha * self.normalizer,
            beta: self.beta * self.normalizer,
            gamma: self.gamma * self.normalizer,
        }
    }

    /// The 8×8 pair matrix on the cycle pattern (self ρ, α/β/γ on the cycle
    /// edges, zero on the two-hop pairs), summing to 1.
    pub fn cycle_pair_graph(&self) -> Result<PairGraph> {
        let mut w = DMatrix::zeros(8, 8);
        for i in 0..8 {
            w[(i, i)] = self.rho;
        }
        let mut place = |pairs: &[(usize, usize)], v: f64| {
            for &(a, b) in pairs {
                w[(a - 1, b - 1)] = v;
                w[(b - 1, a - 1)] = v;
            }
        };
        place(&SEPARATION_ALPHA_PAIRS, self.alpha);
        place(&SEPARATION_BETA_PAIRS, self.beta);
        place(&SEPARATION_GAMMA_PAIRS, self.gamma);
        PairGraph::new(separation_labels(), w, 1)
    }

    /// Eigenvalues of the cycle pair matrix, indexed like the columns of
    /// [`separation_cycle_eigenvectors`].
    pub fn cycle_eigenvalues(&self) -> [f64; 8] {
        let (r, a, b, g) = (self.rho, self.alpha, self.beta, self.gamma);
        [
            r + 2.0 * a + b + 2.0 * g,
            r - b,
            r - b,
            r + b,
            r + b,
            r - 2.0 * a - b + 2.0 * g,
            r - 2.0 * a + b - 2.0 * g,
            r + 2.0 * a - b - 2.0 * g,
        ]
    }
}

/// Unit eigenvectors of every cycle pair matrix, independent of the
/// parameters.
pub fn separation_cycle_eigenvectors() -> DMatrix<f64> {
    #[rustfmt::skip]
    let signs = [
        1, 1, 0, -1, 0, 1, -1, -1,
        1, -1, 0, -1, 0, -1, -1, 1,
        1, 0, 1, 0, -1, -1, 1, -1,
        1, 0, -1, 0, -1, 1, 1, 1,
        1, -1, 0, 1, 0, 1, -1, -1,
        1, 1, 0, 1, 0, -1, -1, 1,
        1, 0, -1, 0, 1, -1, 1, -1,
        1, 0, 1, 0, 1, 1, 1, 1,
    ];
    let scale = [8f64.sqrt().recip(), 0.5, 0.5, 0.5, 0.5, 8f64.sqrt().recip(), 8f64.sqrt().recip(), 8f64.sqrt().recip()];
    DMatrix::from_fn(8, 8, |i, j| signs[i * 8 + j] as f64 * scale[j])
}

pub fn separation_pair_params(p: &SeparationKernelParams) -> SeparationPairParams {
    let SeparationKernelParams {
        rho_p: r,
        alpha_p: a,
        beta_p: b,
        gamma_p: g,
    } = *p;
    let rho = (r * r + 2.0 * a * a + b * b + 2.0 * g * g) / 8.0;
    let alpha = (r * a + b * g) / 4.0;
    let beta = (r * b + 2.0 * a * g) / 4.0;
    let gamma = (r * g + a * b) / 4.0;
    let c = 8.0 * rho + 16.0 * alpha + 8.0 * beta + 16.0 * gamma;
    SeparationPairParams {
        rho: rho / c,
        alpha: alpha / c,
        beta: beta / c,
        gamma: gamma / c,
        normalizer: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(r: f64, a: f64, b: f64, g: f64) -> ToyKernelParams {
        ToyKernelParams::new(r, a, b, g).unwrap()
    }

    #[test]
    fn toy_identity_kernel() {
        let k = build_toy_kernel(&toy(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(k.kernel(), &DMatrix::identity(4, 4));
    }

    #[test]
    fn toy_row_placement() {
        let k = build_toy_kernel(&toy(0.7, 0.15, 0.1, 0.05)).unwrap();
        let row: Vec<f64> = k.kernel().row(0).iter().copied().collect();
        assert_eq!(row, vec![0.7, 0.1, 0.15, 0.05]);
    }

    #[test]
    fn toy_uniform_rows() {
        let k = build_toy_kernel(&toy(0.25, 0.25, 0.25, 0.25)).unwrap();
        assert!(k.kernel().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn toy_rejects_bad_params() {
        assert!(ToyKernelParams::new(0.8, 0.2, 0.1, -0.1).is_err());
        assert!(ToyKernelParams::new(0.7, 0.2, 0.2, 0.2).is_err());
    }

    #[test]
    fn separation_row_one() {
        let p = SeparationKernelParams::new(0.5, 0.2, 0.1, 0.0).unwrap();
        let k = build_separation_kernel(&p).unwrap();
        let row: Vec<f64> = k.kernel().row(0).iter().copied().collect();
        assert_eq!(row, vec![0.5, 0.1, 0.2, 0.0, 0.0, 0.0, 0.2, 0.0]);
    }

    #[test]
    fn separation_source_never_reaches_five_or_six() {
        let p = SeparationKernelParams::new(0.3, 0.15, 0.1, 0.15).unwrap();
        let k = build_separation_kernel(&p).unwrap();
        for src in 0..2 {
            assert_eq!(k.prob(src, 4), 0.0);
            assert_eq!(k.prob(src, 5), 0.0);
        }
    }

    #[test]
    fn separation_identity() {
        let p = SeparationKernelParams::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let k = build_separation_kernel(&p).unwrap();
        assert_eq!(k.kernel(), &DMatrix::identity(8, 8));
    }

    #[test]
    fn separation_rejects_non_normalized() {
        assert!(SeparationKernelParams::new(0.5, 0.2, 0.2, 0.1).is_err());
    }

    #[test]
    fn deterministic_augmentation_gives_diagonal_pairs() {
        let g = positive_pair_graph(&build_toy_kernel(&toy(1.0, 0.0, 0.0, 0.0)).unwrap()).unwrap();
        assert_eq!(g.weights(), &DMatrix::from_diagonal_element(4, 4, 0.25));
    }

    #[test]
    fn toy_pair_graph_brute_force_values() {
        // Brute force: 4·S+(1,1) = Σ_x̄ K[x̄][1]^2 etc.
        let g = positive_pair_graph(&build_toy_kernel(&toy(0.7, 0.15, 0.1, 0.05)).unwrap()).unwrap();
        let w = g.weights();
        assert!((w[(0, 0)] - 0.525 / 4.0).abs() < 1e-15);
        assert!((w[(0, 2)] - 0.22 / 4.0).abs() < 1e-15);
        assert!((w[(0, 1)] - 0.155 / 4.0).abs() < 1e-15);
        assert!((w[(0, 3)] - 0.10 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn toy_pair_params_values() {
        let pp = toy_pair_params(&toy(0.7, 0.15, 0.1, 0.05));
        assert!((pp.rho - 0.13125).abs() < 1e-15);
        assert!((pp.alpha - 0.055).abs() < 1e-15);
        assert!((pp.beta - 0.03875).abs() < 1e-15);
        assert!((pp.gamma - 0.025).abs() < 1e-15);
        let pp = toy_pair_params(&toy(1.0, 0.0, 0.0, 0.0));
        assert_eq!((pp.rho, pp.alpha, pp.beta, pp.gamma), (0.25, 0.0, 0.0, 0.0));
    }

    #[test]
    fn separation_pair_params_identity() {
        let sp = separation_pair_params(&SeparationKernelParams::new(1.0, 0.0, 0.0, 0.0).unwrap());
        assert_eq!(sp.normalizer, 1.0);
        assert_eq!((sp.rho, sp.alpha, sp.beta, sp.gamma), (0.125, 0.0, 0.0, 0.0));
    }

    #[test]
    fn separation_pair_params_match_brute_force_entries() {
        let p = SeparationKernelParams::new(0.5, 0.2, 0.1, 0.0).unwrap();
        let sp = separation_pair_params(&p);
        // Brute-force sums over x̄ for the four cycle entries.
        assert!((sp.unnormalized().rho - 0.34 / 8.0).abs() < 1e-15);
        assert!((sp.unnormalized().alpha - 0.1 / 4.0).abs() < 1e-15);
        let g = positive_pair_graph(&build_separation_kernel(&p).unwrap()).unwrap();
        let w = g.weights();
        let u = sp.unnormalized();
        assert!((w[(0, 0)] - u.rho).abs() < 1e-15);
        assert!((w[(0, 2)] - u.alpha).abs() < 1e-15);
        assert!((w[(0, 1)] - u.beta).abs() < 1e-15);
        assert!((w[(0, 3)] - u.gamma).abs() < 1e-15);
        let total = 8.0 * sp.rho + 16.0 * sp.alpha + 8.0 * sp.beta + 16.0 * sp.gamma;
        assert!((total - 1.0).abs() < 1e-15);
        assert!(sp.cycle_pair_graph().is_ok());
    }

    #[test]
    fn separation_existence_case_meets_condition() {
        let p = SeparationKernelParams::new(0.6, 0.2, 0.0, 0.0).unwrap();
        assert!(separation_pair_params(&p).transfer_condition());
    }

    #[test]
    fn pair_graph_json_round_trip() {
        let g = positive_pair_graph(&build_toy_kernel(&toy(0.7, 0.15, 0.1, 0.05)).unwrap()).unwrap();
        let text = g.to_json().unwrap();
        assert!(text.starts_with("{\"n\":4,\"labels\":[[1,1],[2,1],[1,2],[2,2]],\"weights\":["));
        assert_eq!(PairGraph::from_json(&text).unwrap(), g);
    }

    #[test]
    fn pair_graph_rejects_bad_mass_and_asymmetry() {
        let labels = vec![NodeLabel::new(1, 1), NodeLabel::new(2, 1)];
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]);
        assert!(matches!(PairGraph::new(labels.clone(), w, 1), Err(Error::NonSymmetric { .. })));
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]);
        assert!(matches!(PairGraph::new(labels, w, 1), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn cycle_eigenbasis_diagonalizes() {
        let sp = separation_pair_params(&SeparationKernelParams::new(0.4, 0.15, 0.1, 0.1).unwrap());
        let w = sp.cycle_pair_graph().unwrap().weights().clone();
        let u = separation_cycle_eigenvectors();
        assert!((u.transpose() * &u - DMatrix::identity(8, 8)).abs().max() < 1e-14);
        let d = u.transpose() * w * &u;
        let lam = sp.cycle_eigenvalues();
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { lam[i] } else { 0.0 };
                assert!((d[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    fn toy_strategy() -> impl Strategy<Value = ToyKernelParams> {
        (prop::array::uniform4(0.01f64..1.0), any::<bool>()).prop_filter_map("ties", |(mut x, swap)| {
            x.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if x.windows(2).any(|w| w[0] - w[1] < 1e-6) {
                return None;
            }
            let s: f64 = x.iter().sum();
            let (a, b) = if swap { (x[2], x[1]) } else { (x[1], x[2]) };
            ToyKernelParams::new(x[0] / s, a / s, b / s, 1.0 - (x[0] + a + b) / s).ok()
        })
    }

    fn separation_strategy() -> impl Strategy<Value = SeparationKernelParams> {
        prop::array::uniform4(0.0f64..1.0).prop_filter_map("zero mass", |x| {
            let s = x[0] + 2.0 * x[1] + x[2] + 2.0 * x[3];
            if s < 1e-3 {
                return None;
            }
            let (r, a, b) = (x[0] / s, x[1] / s, x[2] / s);
            SeparationKernelParams::new(r, a, b, (1.0 - r - 2.0 * a - b) / 2.0).ok()
        })
    }

    fn assert_valid_pair_graph(g: &PairGraph) -> std::result::Result<(), TestCaseError> {
        let w = g.weights();
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!(max_asymmetry(w) == 0.0);
        prop_assert!((w.sum() - 1.0).abs() < 1e-10);
        Ok(())
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn monotonicity_transfers(p in toy_strategy()) {
            prop_assume!(p.satisfies_ordering());
            prop_assert!(toy_pair_params(&p).satisfies_ordering());
        }
    }

    proptest! {
        #[test]
        fn toy_closed_form_matches_brute_force(p in toy_strategy()) {
            let g = positive_pair_graph(&build_toy_kernel(&p).unwrap()).unwrap();
            assert_valid_pair_graph(&g)?;
            let pp = toy_pair_params(&p);
            let w = g.weights();
            for x in 0..4 {
                for y in 0..4 {
                    let (lx, ly) = (g.labels()[x], g.labels()[y]);
                    let want = match (lx.class_id == ly.class_id, lx.domain_id == ly.domain_id) {
                        (true, true) => pp.rho,
                        (true, false) => pp.alpha,
                        (false, true) => pp.beta,
                        (false, false) => pp.gamma,
                    };
                    prop_assert!((w[(x, y)] - want).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn separation_closed_form_matches_brute_force(p in separation_strategy()) {
            let k = build_separation_kernel(&p).unwrap();
            for src in 0..2 {
                prop_assert_eq!(k.prob(src, 4), 0.0);
                prop_assert_eq!(k.prob(src, 5), 0.0);
            }
            let g = positive_pair_graph(&k).unwrap();
            assert_valid_pair_graph(&g)?;
            let u = separation_pair_params(&p).unnormalized();
            let w = g.weights();
            for (pairs, v) in [
                (&SEPARATION_ALPHA_PAIRS[..], u.alpha),
                (&SEPARATION_BETA_PAIRS[..], u.beta),
                (&SEPARATION_GAMMA_PAIRS[..], u.gamma),
            ] {
                for &(a, b) in pairs {
                    prop_assert!((w[(a - 1, b - 1)] - v).abs() < 1e-12);
                }
            }
            for i in 0..8 {
                prop_assert!((w[(i, i)] - u.rho).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn separation_eigen_ordering(x in prop::array::uniform4(0.001f64..1.0)) {
            let alpha = x[1] + x[2] + x[3];
            let s = 8.0 * x[0] + 16.0 * alpha + 8.0 * x[2] + 16.0 * x[3];
            let sp = SeparationPairParams { rho: x[0] / s, alpha: alpha / s, beta: x[2] / s, gamma: x[3] / s, normalizer: 1.0 };
            prop_assume!(sp.transfer_condition());
            let w = sp.cycle_pair_graph().unwrap().weights().clone();
            let u = separation_cycle_eigenvectors();
            let l = sp.cycle_eigenvalues();
            for i in 0..8 {
                let r = &w * u.column(i) - u.column(i) * l[i];
                prop_assert!(r.norm() < 1e-14);
            }
            prop_assert!(l[0] > l[7] && l[7] > l[1] && l[1] == l[2] && l[2] > l[5]);
            prop_assert!(l[7] > l[3] && l[3] == l[4]);
        }
    }
}
