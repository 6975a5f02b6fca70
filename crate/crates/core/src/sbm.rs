//! Stochastic block models over (class, domain) blocks.
//!
//! Nodes are ordered domain-major, then class, then index inside the block:
//! node `((d * r) + c) * n + i` has domain `d + 1` and class `c + 1`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphJson, NodeLabel, PairGraph};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub r: usize,
    pub m: usize,
    pub n: usize,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl SbmParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(r: usize, m: usize, n: usize, rho: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            r,
            m,
            n,
            rho,
            alpha,
            beta,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::param("r", "need at least 2 classes"));
        }
        if self.m < 2 {
            return Err(Error::param("m", "need at least 2 domains"));
        }
        if self.n < 1 {
            return Err(Error::param("n", "blocks must be nonempty"));
        }
        for (name, v) in [
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("probability must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.r * self.m * self.n
    }

    /// ρ > max{α, β} and min{α, β} > γ.
    pub fn check_ordering(&self) -> Result<()> {
        if !(self.rho > self.alpha.max(self.beta)) {
            return Err(Error::OrderingViolated(format!(
                "rho = {} must exceed max(alpha, beta) = {}",
                self.rho,
                self.alpha.max(self.beta)
            )));
        }
        if !(self.alpha.min(self.beta) > self.gamma) {
            return Err(Error::OrderingViolated(format!(
                "min(alpha, beta) = {} must exceed gamma = {}",
                self.alpha.min(self.beta),
                self.gamma
            )));
        }
        Ok(())
    }

    /// Feature dimension used by the theory: one constant direction plus
    /// the class and domain families.
    pub fn default_k(&self) -> usize {
        self.r + self.m - 1
    }

    pub fn label(&self, node: usize) -> NodeLabel {
        let block = node / self.n;
        NodeLabel::new(block % self.r + 1, block / self.r + 1)
    }

    pub fn labels(&self) -> Vec<NodeLabel> {
        (0..self.n_nodes()).map(|x| self.label(x)).collect()
    }

    pub fn block_value(&self, a: NodeLabel, b: NodeLabel) -> f64 {
        match (a.class_id == b.class_id, a.domain_id == b.domain_id) {
            (true, true) => self.rho,
            (true, false) => self.alpha,
            (false, true) => self.beta,
            (false, false) => self.gamma,
        }
    }

    pub fn edge_probability(&self, x: usize, y: usize) -> f64 {
        self.block_value(self.label(x), self.label(y))
    }

    /// Sum of all entries of the expected adjacency, `N · λ_a`.
    pub fn expected_edge_mass(&self) -> f64 {
        self.n_nodes() as f64 * closed_form_spectrum(self).lambda_a
    }
}

/// Expected adjacency with its node labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedAdjacency {
    pub labels: Vec<NodeLabel>,
    pub matrix: DMatrix<f64>,
}

impl ExpectedAdjacency {
    /// The normalized pair graph `Ã / Σ Ã`.
    pub fn to_pair_graph(&self, source_domain: usize) -> Result<PairGraph> {
        let mass = self.matrix.sum();
        if mass <= 0.0 {
            return Err(Error::EmptyGraph);
        }
        PairGraph::new(self.labels.clone(), &self.matrix / mass, source_domain)
    }
}

pub fn expected_adjacency(p: &SbmParams) -> Result<ExpectedAdjacency> {
    p.validate()?;
    let labels = p.labels();
    let n = labels.len();
    let matrix = DMatrix::from_fn(n, n, |i, j| p.block_value(labels[i], labels[j]));
    Ok(ExpectedAdjacency { labels, matrix })
}

/// A sampled 0/1 adjacency stored as sorted neighbour lists.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledGraph {
    params: SbmParams,
    seed: u64,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl SampledGraph {
    /// Builds a graph from per-node sorted neighbour lists. The lists must be
    /// symmetric.
    pub(crate) fn from_rows(params: SbmParams, seed: u64, rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for row in rows {
            neighbors.extend_from_slice(&row);
            offsets.push(neighbors.len());
        }
        Self {
            params,
            seed,
            offsets,
            neighbors,
        }
    }

    pub fn params(&self) -> &SbmParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `|E| = Σ_{x,x'} A[x][x']` over ordered pairs.
    pub fn edge_count(&self) -> u64 {
        self.neighbors.len() as u64
    }

    pub fn labels(&self) -> Vec<NodeLabel> {
        self.params.labels()
    }

    pub fn neighbors(&self, x: usize) -> &[u32] {
        &self.neighbors[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn has_edge(&self, x: usize, y: usize) -> bool {
        self.neighbors(x).binary_search(&(y as u32)).is_ok()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut a = DMatrix::zeros(n, n);
        for x in 0..n {
            for &y in self.neighbors(x) {
                a[(x, y as usize)] = 1.0;
            }
        }
        a
    }

    /// `A / |E|` as a pair graph with domain 1 as source.
    pub fn to_pair_graph(&self) -> Result<PairGraph> {
        if self.edge_count() == 0 {
            return Err(Error::EmptyGraph);
        }
        PairGraph::new(self.labels(), self.to_dense() / self.edge_count() as f64, 1)
    }

    /// `y = A x` for a dense vector.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, out) in y.iter_mut().enumerate() {
            *out = self.neighbors(i).iter().map(|&j| x[j as usize]).sum();
        }
    }

    /// `A X` for several vectors, sharing one pass over the edges.
    pub fn matvec_block(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        let n = self.n_nodes();
        let b = xs.len();
        if b == 0 {
            return Vec::new();
        }
        let mut interleaved = vec![0.0; n * b];
        for (c, x) in xs.iter().enumerate() {
            for (i, &v) in x.iter().enumerate() {
                interleaved[i * b + c] = v;
            }
        }
        let mut out = vec![0.0; n * b];
        out.par_chunks_mut(b).enumerate().for_each(|(i, acc)| {
            for &j in self.neighbors(i) {
                let row = &interleaved[j as usize * b..(j as usize + 1) * b];
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
        });
        (0..b).map(|c| (0..n).map(|i| out[i * b + c]).collect()).collect()
    }

    /// JSON in the pair-graph layout; graphs above 512 nodes list their
    /// edges (1-based, `i <= j`) instead of dense weights.
    pub fn to_json(&self) -> Result<String> {
        let n = self.n_nodes();
        let labels = self.labels().iter().map(|l| [l.class_id, l.domain_id]).collect();
        let (weights, edges) = if n > 512 {
            let mut edges = Vec::new();
            for x in 0..n {
                for &y in self.neighbors(x) {
                    if y as usize >= x {
                        edges.push([x + 1, y as usize + 1]);
                    }
                }
            }
            (None, Some(edges))
        } else {
            let e = self.edge_count().max(1) as f64;
            let mut w = vec![0.0; n * n];
            for x in 0..n {
                for &y in self.neighbors(x) {
                    w[x * n + y as usize] = 1.0 / e;
                }
            }
            (Some(w), None)
        };
        let doc = GraphJson {
            n,
            labels,
            weights,
            edges,
            source_domain: 1,
            seed: Some(self.seed),
            edge_count: Some(self.edge_count()),
        };
        Ok(serde_json::to_string(&doc)?)
    }
}

/// Samples each unordered pair `{x, x'}` (including `x = x'`) independently.
///
/// Row `x` owns ChaCha stream `x` and draws for `x' = x, x+1, ...` in order,
/// so the draw for a pair depends only on `(seed, min, max)`.
pub fn sample_adjacency(p: &SbmParams, seed: u64) -> Result<SampledGraph> {
    p.validate()?;
    let n = p.n_nodes();
    let upper: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(x as u64);
            let lx = p.label(x);
            let mut row = Vec::new();
            for y in x..n {
                let u: f64 = rng.random();
                if u < p.block_value(lx, p.label(y)) {
                    row.push(y as u32);
                }
            }
            row
        })
        .collect();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (x, row) in upper.iter().enumerate() {
        for &y in row {
            rows[x].push(y);
            if y as usize != x {
                rows[y as usize].push(x as u32);
            }
        }
    }
    for row in &mut rows {
        row.sort_unstable();
    }
    Ok(SampledGraph::from_rows(*p, seed, rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmSpectrum {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
    /// (1, m-1, r-1, (m-1)(r-1)).
    pub multiplicities: [usize; 4],
}

impl SbmSpectrum {
    /// All N eigenvalues of the expected adjacency, sorted descending.
    pub fn sorted_values(&self, n_nodes: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n_nodes);
        for (v, mult) in [self.lambda_a, self.lambda_b, self.lambda_c, self.lambda_d]
            .into_iter()
            .zip(self.multiplicities)
        {
            out.extend(std::iter::repeat_n(v, mult));
        }
        let nonzero: usize = self.multiplicities.iter().sum();
        out.extend(std::iter::repeat_n(0.0, n_nodes - nonzero));
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    pub fn all_positive(&self) -> bool {
        [self.lambda_a, self.lambda_b, self.lambda_c, self.lambda_d]
            .iter()
            .all(|&v| v > 0.0)
    }
}

pub fn closed_form_spectrum(p: &SbmParams) -> SbmSpectrum {
    let (r, m, n) = (p.r as f64, p.m as f64, p.n as f64);
    let (rho, a, b, g) = (p.rho, p.alpha, p.beta, p.gamma);
    SbmSpectrum {
        lambda_a: n * (rho + (r - 1.0) * b + (m - 1.0) * a + (m - 1.0) * (r - 1.0) * g),
        lambda_b: n * (rho + (r - 1.0) * b - a - (r - 1.0) * g),
        lambda_c: n * (rho - b + (m - 1.0) * a - (m - 1.0) * g),
        lambda_d: n * (rho - b - a + g),
        multiplicities: [1, p.m - 1, p.r - 1, (p.m - 1) * (p.r - 1)],
    }
}

/// `n · min{r(β-γ), m(α-γ)}`, the gap below the top `r+m-1` eigenvalues
/// when `λ_d ≥ 0`.
pub fn eigengap(p: &SbmParams) -> Result<f64> {
    p.check_ordering()?;
    let n = p.n as f64;
    let gap = n * ((p.r as f64) * (p.beta - p.gamma)).min((p.m as f64) * (p.alpha - p.gamma));
    if gap <= 0.0 {
        return Err(Error::Degenerate(format!("eigengap {gap} is not positive")));
    }
    Ok(gap)
}

/// `λ̃_k - λ̃_{k+1}` read off the sorted closed-form spectrum.
pub fn sorted_gap(p: &SbmParams, k: usize) -> Result<f64> {
    let n_nodes = p.n_nodes();
    if k == 0 || k >= n_nodes {
        return Err(Error::RankOutOfRange { k, max: n_nodes - 1 });
    }
    let vals = closed_form_spectrum(p).sorted_values(n_nodes);
    Ok(vals[k - 1] - vals[k])
}

/// `λ_c / (λ_c + m ξ)`.
pub fn ideal_scaling_factor(p: &SbmParams, xi: f64) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::param("xi", "must be nonnegative"));
    }
    let lc = closed_form_spectrum(p).lambda_c;
    if lc <= 0.0 {
        return Err(Error::Degenerate(format!("lambda_c = {lc} is not positive")));
    }
    Ok(lc / (lc + p.m as f64 * xi))
}

/// Largest η for which the ideal scaling factor is at least `1 - ε`:
/// `(α - γ) ε / (2 r ρ)`.
pub fn theorem_eta_bound(p: &SbmParams, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::param("epsilon", "must lie in (0, 1/2)"));
    }
    if !(p.alpha > p.gamma) {
        return Err(Error::OrderingViolated(format!(
            "alpha = {} must exceed gamma = {}",
            p.alpha, p.gamma
        )));
    }
    Ok((p.alpha - p.gamma) * epsilon / (2.0 * p.r as f64 * p.rho))
}

/// The regularizer `ξ̃ = (|Ẽ| / N²) η |S|` that the ridge probe adds to the
/// source block of the expected adjacency.
pub fn effective_xi(p: &SbmParams, eta: f64) -> f64 {
    let nn = p.n_nodes() as f64;
    let source = (p.r * p.n) as f64;
    p.expected_edge_mass() / (nn * nn) * eta * source
}
