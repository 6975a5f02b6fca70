//! Deterministic invariant suites run by the `verify` command.
//!
//! Every check draws from its own fixed-seed generator, so a suite gives the
//! same report whether it runs alone or with the others, on any number of
//! threads.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{dann_domain_term, erm_minimizer, erm_objective, DANN_ENCODER};
use crate::error::{Error, Result};
use crate::experiments::{
    ablate_cross_edges, deviation_norm, expected_matvec, fit_connectivity, linspace, run_expected_trial, run_sbm_trial,
    run_separation, sweep, write_csv, ConnectivityRecord, SweepSpec, Vary,
};
use crate::graph::{
    build_separation_kernel, build_toy_kernel, positive_pair_graph, separation_cycle_eigenvectors,
    separation_pair_params, toy_pair_params, PairGraph, SeparationKernelParams, SeparationPairParams, ToyKernelParams,
    SEPARATION_ALPHA_PAIRS, SEPARATION_BETA_PAIRS, SEPARATION_GAMMA_PAIRS,
};
use crate::probe::{
    class_ids, dual_path_deviation, fit_on_nodes, label_matrix, mean_zero_onehot, predict, zero_one_error,
};
use crate::sbm::{
    closed_form_spectrum, effective_xi, expected_adjacency, ideal_scaling_factor, sample_adjacency, theorem_eta_bound,
    SbmParams,
};
use crate::spectral::{
    embed, embed_sampled, rank_k_approx, rank_k_canonical, spectral_contrastive_loss, symmetric_eigensystem,
    DEFAULT_TOL,
};

pub const SUITES: [&str; 7] = ["graph", "sbm", "spectral", "probe", "baselines", "experiments", "cli"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub check: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<(bool, String)>;

fn checks(suite: &str) -> &'static [(&'static str, Check)] {
    match suite {
        "graph" => &[
            ("pair_graph_is_distribution", graph_pair_graph_valid),
            ("monotonicity_transfer", graph_monotonicity),
            ("closed_form_matches_brute_force", graph_closed_form),
            ("separation_reachability", graph_reachability),
        ],
        "sbm" => &[
            ("closed_form_spectrum", sbm_spectrum_grid),
            ("sampling_reproducible", sbm_reproducible),
            ("operator_norm_concentration", sbm_concentration),
            ("constant_eigenvector", sbm_constant_vector),
        ],
        "spectral" => &[
            ("truncation_energy", spectral_truncation),
            ("gram_identity", spectral_gram),
            ("loss_identity", spectral_loss),
            ("rotation_invariance", spectral_rotation),
            ("sign_determinism", spectral_signs),
        ],
        "probe" => &[
            ("dual_path", probe_dual_path),
            ("rotation_invariance", probe_rotation),
            ("scaling_factor_law", probe_scaling_law),
            ("eta_bound_guarantee", probe_eta_bound),
            ("label_rows_sum_to_zero", probe_label_rows),
        ],
        "baselines" => &[
            ("erm_pointwise_optimum", baselines_erm),
            ("dann_domain_term_upper_bound", baselines_dann),
            ("separation_eigen_ordering", baselines_ordering),
            ("shared_error_metric", baselines_shared_metric),
        ],
        "experiments" => &[
            ("sweep_determinism", experiments_sweep_determinism),
            ("error_decreases_in_n", experiments_trend_n),
            ("error_decreases_in_gap", experiments_trend_gap),
            ("domain_probe_separable", experiments_domain),
            ("fit_exact_on_noiseless_data", experiments_fit),
            ("ablation_edges", experiments_ablation),
        ],
        "cli" => &[("same_argv_same_output", cli_determinism)],
        _ => &[],
    }
}

/// Runs the named suites in the given order; an empty list runs all.
pub fn run_suites(names: &[String]) -> Result<Vec<CheckOutcome>> {
    let selected: Vec<&'static str> = if names.is_empty() {
        SUITES.to_vec()
    } else {
        names
            .iter()
            .map(|n| {
                SUITES
                    .iter()
                    .copied()
                    .find(|s| s == n)
                    .ok_or_else(|| Error::param("suite", format!("unknown suite `{n}`; expected one of {}", SUITES.join(", "))))
            })
            .collect::<Result<_>>()?
    };
    let mut out = Vec::new();
    for suite in selected {
        for &(check, f) in checks(suite) {
            let (passed, detail) = match f() {
                Ok(v) => v,
                Err(e) => (false, format!("error: {e}")),
            };
            out.push(CheckOutcome {
                suite,
                check,
                passed,
                detail,
            });
        }
    }
    Ok(out)
}

pub fn render_text(outcomes: &[CheckOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{tag} {}/{} {}\n", o.suite, o.check, o.detail));
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    s.push_str(&format!("{passed} passed, {} failed\n", outcomes.len() - passed));
    s
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x7665_7269_6679 ^ tag)
}

fn e(x: f64) -> String {
    format!("{x:.3e}")
}

/// Toy parameters with ρ′ > max{α′, β′}, min{α′, β′} > γ′, all distinct.
pub fn random_toy_ordered(rng: &mut impl Rng) -> ToyKernelParams {
    loop {
        let mut x: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..1.0));
        x.sort_by(|a, b| b.total_cmp(a));
        if x.windows(2).any(|w| w[0] - w[1] < 1e-3) {
            continue;
        }
        let s: f64 = x.iter().sum();
        let (a, b) = if rng.random_bool(0.5) { (x[1], x[2]) } else { (x[2], x[1]) };
        let (rho, alpha, beta) = (x[0] / s, a / s, b / s);
        if let Ok(p) = ToyKernelParams::new(rho, alpha, beta, 1.0 - rho - alpha - beta) {
            if p.satisfies_ordering() {
                return p;
            }
        }
    }
}

/// Toy parameters whose derived α pair value is below the derived γ.
pub fn random_toy_flipped(rng: &mut impl Rng) -> ToyKernelParams {
    loop {
        let x: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..1.0));
        let s: f64 = x.iter().sum();
        let (rho, alpha, beta) = (x[0] / s, x[1] / s, x[2] / s);
        let Ok(p) = ToyKernelParams::new(rho, alpha, beta, 1.0 - rho - alpha - beta) else {
            continue;
        };
        let pp = toy_pair_params(&p);
        if pp.gamma - pp.alpha > 1e-3 && (pp.beta - pp.rho).abs() > 1e-3 {
            return p;
        }
    }
}

/// Any nonnegative separation kernel with every entry positive.
pub fn random_separation(rng: &mut impl Rng) -> SeparationKernelParams {
    loop {
        let x: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..1.0));
        let s = x[0] + 2.0 * x[1] + x[2] + 2.0 * x[3];
        let (r, a, b) = (x[0] / s, x[1] / s, x[2] / s);
        if let Ok(p) = SeparationKernelParams::new(r, a, b, (1.0 - r - 2.0 * a - b) / 2.0) {
            return p;
        }
    }
}

/// Separation kernels with β′ = γ′ = 0 and ρ′ > α′ > 0.
pub fn random_separation_existence(rng: &mut impl Rng) -> SeparationKernelParams {
    loop {
        let rho = rng.random_range(0.34..0.99);
        if let Ok(p) = SeparationKernelParams::new(rho, (1.0 - rho) / 2.0, 0.0, 0.0) {
            return p;
        }
    }
}

/// Block probabilities with ρ > max{α, β} and min{α, β} > γ, all distinct.
pub fn random_sbm(rng: &mut impl Rng, r: usize, m: usize, n: usize) -> SbmParams {
    loop {
        let mut x: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.05..0.95));
        x.sort_by(|a, b| b.total_cmp(a));
        if x.windows(2).any(|w| w[0] - w[1] < 0.02) {
            continue;
        }
        let (alpha, beta) = if rng.random_bool(0.5) { (x[1], x[2]) } else { (x[2], x[1]) };
        if let Ok(p) = SbmParams::new(r, m, n, x[0], alpha, beta, x[3]) {
            return p;
        }
    }
}

/// A Haar-ish orthonormal matrix from the QR factor of a Gaussian-free
/// uniform draw.
pub fn random_orthonormal(rng: &mut impl Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

/// Graphs and ranks on which the probe and embedding identities are
/// checked: toy, separation, expected SBMs and small sampled SBMs.
pub fn corpus() -> Result<&'static [(String, PairGraph, usize)]> {
    static CORPUS: OnceLock<Vec<(String, PairGraph, usize)>> = OnceLock::new();
    if let Some(c) = CORPUS.get() {
        return Ok(c);
    }
    let built = build_corpus()?;
    Ok(CORPUS.get_or_init(|| built))
}

fn build_corpus() -> Result<Vec<(String, PairGraph, usize)>> {
    let mut rng = rng(1);
    let mut out = Vec::new();
    for i in 0..10 {
        let p = random_toy_ordered(&mut rng);
        out.push((format!("toy{i}"), positive_pair_graph(&build_toy_kernel(&p)?)?, 3));
    }
    for i in 0..5 {
        let p = random_separation_existence(&mut rng);
        out.push((format!("separation_existence{i}"), positive_pair_graph(&build_separation_kernel(&p)?)?, 3));
        let q = random_separation(&mut rng);
        out.push((format!("separation{i}"), positive_pair_graph(&build_separation_kernel(&q)?)?, 3));
    }
    for r in [2, 3] {
        for m in [2, 3] {
            for n in [1, 2, 5] {
                let p = random_sbm(&mut rng, r, m, n);
                out.push((format!("expected_r{r}m{m}n{n}"), expected_adjacency(&p)?.to_pair_graph(1)?, p.default_k()));
            }
        }
    }
    for i in 0..20 {
        let r = 2 + i % 2;
        let n = 8 + i;
        let p = SbmParams::new(r, 2, n, 0.7, 0.45, 0.4, 0.1)?;
        out.push((format!("sampled{i}"), sample_adjacency(&p, 1000 + i as u64)?.to_pair_graph()?, p.default_k()));
    }
    Ok(out)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

fn graph_pair_graph_valid() -> Result<(bool, String)> {
    let mut rng = rng(10);
    let mut worst_sum = 0.0_f64;
    let mut worst_asym = 0.0_f64;
    let mut negative = 0;
    for i in 0..400 {
        let k = if i % 2 == 0 {
            build_toy_kernel(&random_toy_ordered(&mut rng))?
        } else {
            build_separation_kernel(&random_separation(&mut rng))?
        };
        let g = positive_pair_graph(&k)?;
        let w = g.weights();
        worst_sum = worst_sum.max((w.sum() - 1.0).abs());
        worst_asym = worst_asym.max(max_abs(&(w - w.transpose())));
        negative += w.iter().filter(|&&v| v < 0.0).count();
    }
    let ok = worst_sum <= 1e-10 && worst_asym == 0.0 && negative == 0;
    Ok((ok, format!("kernels=400 max_sum_err={} max_asym={} negative={negative}", e(worst_sum), e(worst_asym))))
}

fn graph_monotonicity() -> Result<(bool, String)> {
    let mut rng = rng(11);
    let bad = (0..1000)
        .filter(|_| !toy_pair_params(&random_toy_ordered(&mut rng)).satisfies_ordering())
        .count();
    Ok((bad == 0, format!("draws=1000 violations={bad}")))
}

fn graph_closed_form() -> Result<(bool, String)> {
    let mut rng = rng(12);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let p = if rng.random_bool(0.5) {
            random_toy_ordered(&mut rng)
        } else {
            random_toy_flipped(&mut rng)
        };
        let g = positive_pair_graph(&build_toy_kernel(&p)?)?;
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
                worst = worst.max((w[(x, y)] - want).abs());
            }
        }
    }
    for _ in 0..200 {
        let p = random_separation(&mut rng);
        let w = positive_pair_graph(&build_separation_kernel(&p)?)?.weights().clone();
        let u = separation_pair_params(&p).unnormalized();
        for (pairs, v) in [
            (&SEPARATION_ALPHA_PAIRS[..], u.alpha),
            (&SEPARATION_BETA_PAIRS[..], u.beta),
            (&SEPARATION_GAMMA_PAIRS[..], u.gamma),
        ] {
            for &(a, b) in pairs {
                worst = worst.max((w[(a - 1, b - 1)] - v).abs());
            }
        }
        for i in 0..8 {
            worst = worst.max((w[(i, i)] - u.rho).abs());
        }
    }
    Ok((worst <= 1e-12, format!("draws=400 max_err={}", e(worst))))
}

fn graph_reachability() -> Result<(bool, String)> {
    let mut rng = rng(13);
    let mut bad = 0;
    for _ in 0..200 {
        let k = build_separation_kernel(&random_separation(&mut rng))?;
        for s in 0..2 {
            for t in [4, 5] {
                if k.prob(s, t) != 0.0 {
                    bad += 1;
                }
            }
        }
    }
    Ok((bad == 0, format!("kernels=200 nonzero={bad}")))
}

fn sbm_spectrum_grid() -> Result<(bool, String)> {
    let mut rng = rng(20);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for r in [2, 3, 4] {
        for m in [2, 3] {
            for n in [1, 2, 5] {
                for _ in 0..5 {
                    let p = random_sbm(&mut rng, r, m, n);
                    let es = symmetric_eigensystem(&expected_adjacency(&p)?.matrix, DEFAULT_TOL)?;
                    let want = closed_form_spectrum(&p).sorted_values(p.n_nodes());
                    for (a, b) in es.eigenvalues.iter().zip(&want) {
                        worst = worst.max((a - b).abs());
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok((worst <= 1e-9, format!("cases={cases} max_dev={}", e(worst))))
}

fn sbm_reproducible() -> Result<(bool, String)> {
    let mut ok = true;
    for (i, n) in [5usize, 20, 60].into_iter().enumerate() {
        let p = SbmParams::new(3, 2, n, 0.6, 0.4, 0.3, 0.1)?;
        let a = sample_adjacency(&p, 42 + i as u64)?;
        let b = sample_adjacency(&p, 42 + i as u64)?;
        let c = sample_adjacency(&p, 43 + i as u64)?;
        ok &= a == b && a.edge_count() > 0 && (n < 20 || a != c);
    }
    Ok((ok, "graphs=3".into()))
}

fn sbm_concentration() -> Result<(bool, String)> {
    let sizes = [24usize, 48, 96, 192];
    let mut means = Vec::new();
    let mut worst_ratio = 0.0_f64;
    let mut base = 0.0;
    for (i, &n) in sizes.iter().enumerate() {
        let p = SbmParams::new(2, 2, n, 0.6, 0.4, 0.3, 0.1)?;
        let mut vals = Vec::new();
        for seed in 0..10 {
            let g = sample_adjacency(&p, 500 + seed)?;
            vals.push(deviation_norm(&g)? / (g.n_nodes() as f64).sqrt());
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if i == 0 {
            base = mean;
        }
        for v in &vals {
            worst_ratio = worst_ratio.max(v / base);
        }
        means.push(e(mean));
    }
    Ok((
        worst_ratio <= 3.0,
        format!("N=96,192,384,768 mean_ratio=[{}] max_over_base={}", means.join(","), e(worst_ratio)),
    ))
}

fn sbm_constant_vector() -> Result<(bool, String)> {
    let mut rng = rng(23);
    let mut worst = 0.0_f64;
    for r in [2, 3, 4] {
        for m in [2, 3] {
            for n in [1, 2, 5] {
                let p = random_sbm(&mut rng, r, m, n);
                let la = closed_form_spectrum(&p).lambda_a;
                let a = expected_adjacency(&p)?.matrix;
                for row in a.row_iter() {
                    worst = worst.max((row.sum() - la).abs() / la);
                }
                let ones = vec![1.0; p.n_nodes()];
                let mut y = vec![0.0; p.n_nodes()];
                expected_matvec(&p, &ones, &mut y);
                for v in y {
                    worst = worst.max((v - la).abs() / la);
                }
            }
        }
    }
    Ok((worst <= 1e-12, format!("grid=18 max_rel_err={}", e(worst))))
}

fn spectral_truncation() -> Result<(bool, String)> {
    let mut rng = rng(30);
    let mut worst = 0.0_f64;
    for _ in 0..30 {
        let n = rng.random_range(2..25);
        let k = rng.random_range(1..=n);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = (&a + a.transpose()) * 0.5;
        let mk = rank_k_approx(&m, k)?;
        let es = symmetric_eigensystem(&m, DEFAULT_TOL)?;
        let tail: f64 = es.eigenvalues[k..].iter().map(|v| v * v).sum();
        worst = worst.max(((&m - mk).norm_squared() - tail).abs());
    }
    Ok((worst <= 1e-9, format!("matrices=30 max_err={}", e(worst))))
}

fn spectral_gram() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    let graphs = corpus()?;
    for (_, g, k) in graphs {
        let n = g.n_nodes() as f64;
        let emb = embed(g, *k)?;
        let target = rank_k_canonical(&(g.weights() * (n * n)), *k, &g.source_nodes())?;
        let diff = (&emb.features * emb.features.transpose() - target).norm();
        worst = worst.max(diff / (n * n));
    }
    Ok((worst <= 1e-8, format!("graphs={} max_err_over_N2={}", graphs.len(), e(worst))))
}

fn spectral_loss() -> Result<(bool, String)> {
    let mut rng = rng(32);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let g = positive_pair_graph(&build_toy_kernel(&random_toy_ordered(&mut rng))?)?;
        let n2 = (g.n_nodes() * g.n_nodes()) as f64;
        for k in 1..=3 {
            let f = embed(&g, k)?.features;
            let loss = spectral_contrastive_loss(&g, &f)?;
            let scaled = g.weights() * n2;
            let want = ((&scaled - &f * f.transpose()).norm_squared() - scaled.norm_squared()) / n2;
            worst = worst.max((loss - want).abs());
        }
    }
    Ok((worst <= 1e-9, format!("graphs=50 ranks=1..3 max_err={}", e(worst))))
}

fn spectral_rotation() -> Result<(bool, String)> {
    let mut rng = rng(33);
    let mut worst = 0.0_f64;
    let graphs = corpus()?;
    for (_, g, k) in graphs {
        let emb = embed(g, *k)?;
        let q = random_orthonormal(&mut rng, *k);
        let rot = emb.rotated(&q);
        let a = &emb.features * emb.features.transpose();
        let b = &rot.features * rot.features.transpose();
        worst = worst.max(max_abs(&(a - &b)) / max_abs(&b).max(f64::MIN_POSITIVE));
    }
    Ok((worst <= 1e-10, format!("graphs={} max_rel_gram_change={}", graphs.len(), e(worst))))
}

fn spectral_signs() -> Result<(bool, String)> {
    let mut same = true;
    for (_, g, k) in corpus()?.iter().step_by(5) {
        same &= embed(g, *k)? == embed(g, *k)?;
    }
    let p = SbmParams::new(3, 2, 60, 0.6, 0.4, 0.3, 0.1)?;
    let g = sample_adjacency(&p, 9)?;
    same &= embed_sampled(&g, 4)? == embed_sampled(&g, 4)?;
    Ok((same, "dense and Krylov paths repeated".into()))
}

fn probe_dual_path() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    let graphs = corpus()?;
    for (_, g, k) in graphs {
        worst = worst.max(dual_path_deviation(g, *k, 0.01)?);
    }
    Ok((worst <= 1e-8, format!("graphs={} max_dev={}", graphs.len(), e(worst))))
}

fn probe_rotation() -> Result<(bool, String)> {
    let mut rng = rng(41);
    let mut worst = 0.0_f64;
    let mut flips = 0;
    let graphs = corpus()?;
    for (_, g, k) in graphs {
        let emb = embed(g, *k)?;
        let rot = emb.rotated(&random_orthonormal(&mut rng, *k));
        let ids = class_ids(g.labels());
        let src = g.source_nodes();
        let r = g.n_classes();
        let a = predict(&emb, &fit_on_nodes(&emb, &ids, r, &src, 0.01)?)?;
        let b = predict(&rot, &fit_on_nodes(&rot, &ids, r, &src, 0.01)?)?;
        worst = worst.max(max_abs(&(&a.scores - &b.scores)));
        flips += a.classes.iter().zip(&b.classes).filter(|(x, y)| x != y).count();
    }
    Ok((worst <= 1e-10 && flips == 0, format!("graphs={} max_score_change={} argmax_changes={flips}", graphs.len(), e(worst))))
}

/// Largest gap between target score rows and `factor · y_x` on an expected
/// graph.
pub fn scaling_law_deviation(p: &SbmParams, xi: f64) -> Result<f64> {
    let eta = xi / effective_xi(p, 1.0);
    let g = expected_adjacency(p)?.to_pair_graph(1)?;
    let emb = embed(&g, p.default_k())?;
    let ids = class_ids(g.labels());
    let pred = predict(&emb, &fit_on_nodes(&emb, &ids, p.r, &g.source_nodes(), eta)?)?;
    let factor = ideal_scaling_factor(p, xi)?;
    let mut worst = 0.0_f64;
    for x in g.target_nodes() {
        let y = mean_zero_onehot(ids[x], p.r)?;
        for (j, yj) in y.iter().enumerate() {
            worst = worst.max((pred.scores[(x, j)] - factor * yj).abs());
        }
    }
    Ok(worst)
}

fn probe_scaling_law() -> Result<(bool, String)> {
    let mut rng = rng(42);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for r in [2, 3, 4] {
        for m in [2, 3] {
            for n in [1, 2, 5] {
                let p = random_sbm(&mut rng, r, m, n);
                for xi in [1e-4, 1e-2, 0.1, 1.0, 10.0] {
                    worst = worst.max(scaling_law_deviation(&p, xi)?);
                    cases += 1;
                }
            }
        }
    }
    Ok((worst <= 1e-8, format!("cases={cases} max_dev={}", e(worst))))
}

fn probe_eta_bound() -> Result<(bool, String)> {
    let mut rng = rng(43);
    let mut worst = f64::INFINITY;
    let mut ok = true;
    let mut cases = 0;
    for r in [2, 3, 4] {
        for m in [2, 3] {
            for n in [1, 2, 5] {
                let p = random_sbm(&mut rng, r, m, n);
                if p.alpha <= p.gamma {
                    continue;
                }
                for eps in [0.1, 0.25, 0.45] {
                    let eta = theorem_eta_bound(&p, eps)?;
                    let formula = ideal_scaling_factor(&p, effective_xi(&p, eta))?;
                    let empirical = run_expected_trial(&p, p.default_k(), eta)?.scaling_factor_empirical;
                    let margin = formula.min(empirical) - (1.0 - eps);
                    ok &= margin >= -1e-12;
                    worst = worst.min(margin);
                    cases += 1;
                }
            }
        }
    }
    Ok((ok, format!("cases={cases} min_margin={}", e(worst))))
}

fn probe_label_rows() -> Result<(bool, String)> {
    let mut rng = rng(44);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let r = rng.random_range(2..8);
        let ids: Vec<usize> = (0..20).map(|_| rng.random_range(1..=r)).collect();
        let nodes: Vec<usize> = (0..20).filter(|_| rng.random_bool(0.7)).collect();
        let y = label_matrix(&ids, &nodes, r)?;
        for row in y.row_iter() {
            worst = worst.max(row.sum().abs());
        }
    }
    Ok((worst <= 1e-15, format!("matrices=100 max_row_sum={}", e(worst))))
}

fn baselines_erm() -> Result<(bool, String)> {
    let mut rng = rng(50);
    let mut worst = 0.0_f64;
    let mut non_increase = 0;
    let mut draws = 0;
    while draws < 50 {
        let p = random_separation(&mut rng);
        let k = build_separation_kernel(&p)?;
        let Ok(pred) = erm_minimizer(&k, 1) else {
            continue;
        };
        draws += 1;
        // analytic optimum: each reachable node contributes mass · (1 - ‖mean target‖²)
        let mut analytic = 0.0;
        for x in 0..8 {
            let mut mass = 0.0;
            let mut mean = [0.0; 2];
            for s in 0..2 {
                let w = 0.5 * k.prob(s, x);
                mass += w;
                mean[k.labels()[s].class_index()] += w;
            }
            if mass > 0.0 {
                let sq = (mean[0] * mean[0] + mean[1] * mean[1]) / (mass * mass);
                analytic += mass * (1.0 - sq);
            }
        }
        let value = erm_objective(&k, &pred, 1)?;
        worst = worst.max((value - analytic).abs());
        for _ in 0..5 {
            let mut moved = pred.clone();
            for x in (0..8).filter(|&x| pred.reachable[x]) {
                for c in 0..2 {
                    moved.scores[(x, c)] += 1e-3 * rng.random_range(-1.0..1.0);
                }
            }
            if erm_objective(&k, &moved, 1)? <= value {
                non_increase += 1;
            }
        }
    }
    Ok((worst <= 1e-12 && non_increase == 0, format!("kernels=50 max_err={} non_increasing_perturbations={non_increase}", e(worst))))
}

fn baselines_dann() -> Result<(bool, String)> {
    let mut rng = rng(51);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut construction_err = 0.0_f64;
    for _ in 0..20 {
        let k = build_separation_kernel(&random_separation_existence(&mut rng))?;
        let lambda = rng.random_range(0.1..5.0);
        let bound = 3.0 * lambda / 8.0;
        construction_err = construction_err.max((dann_domain_term(&k, &DANN_ENCODER, lambda)?.0 - bound).abs());
        for _ in 0..100 {
            let enc: Vec<usize> = (0..8).map(|_| rng.random_range(0..8)).collect();
            worst_excess = worst_excess.max(dann_domain_term(&k, &enc, lambda)?.0 - bound);
        }
    }
    Ok((
        worst_excess <= 1e-12 && construction_err <= 1e-12,
        format!("kernels=20 encoders=100 max_excess={} construction_err={}", e(worst_excess), e(construction_err)),
    ))
}

fn baselines_ordering() -> Result<(bool, String)> {
    let mut rng = rng(52);
    let u = separation_cycle_eigenvectors();
    let mut bad = 0;
    let mut worst_res = 0.0_f64;
    for _ in 0..500 {
        let (rho, beta, gamma) = (rng.random_range(0.01..1.0), rng.random_range(0.01..1.0), rng.random_range(0.01..1.0));
        let alpha = beta + gamma + rng.random_range(0.001..1.0);
        let s = 8.0 * rho + 16.0 * alpha + 8.0 * beta + 16.0 * gamma;
        let sp = SeparationPairParams {
            rho: rho / s,
            alpha: alpha / s,
            beta: beta / s,
            gamma: gamma / s,
            normalizer: 1.0,
        };
        let w = sp.cycle_pair_graph()?.weights().clone();
        let l = sp.cycle_eigenvalues();
        for i in 0..8 {
            worst_res = worst_res.max((&w * u.column(i) - u.column(i) * l[i]).norm());
        }
        let es = symmetric_eigensystem(&w, DEFAULT_TOL)?;
        let mut sorted = l;
        sorted.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in es.eigenvalues.iter().zip(&sorted) {
            worst_res = worst_res.max((a - b).abs());
        }
        if !(l[0] > l[7] && l[7] > l[1] && l[1] == l[2] && l[2] > l[5] && l[7] > l[3] && l[3] == l[4]) {
            bad += 1;
        }
    }
    Ok((bad == 0 && worst_res <= 1e-12, format!("draws=500 violations={bad} max_residual={}", e(worst_res))))
}

fn baselines_shared_metric() -> Result<(bool, String)> {
    let mut rng = rng(53);
    let mut bad = 0;
    for _ in 0..20 {
        let p = random_separation_existence(&mut rng);
        let lambda = rng.random_range(0.1..5.0);
        let rep = run_separation(&p, lambda, 0.01)?;
        let k = build_separation_kernel(&p)?;
        let truth = class_ids(k.labels());
        let target: Vec<usize> = (2..8).collect();
        let erm = zero_one_error(&erm_minimizer(&k, 1)?.classes(), &truth, &target)?;
        if erm != rep.erm_err || rep.erm_err != 1.0 / 3.0 || rep.dann_err != 1.0 / 3.0 || rep.contrastive_err != 0.0 {
            bad += 1;
        }
    }
    Ok((bad == 0, format!("kernels=20 mismatches={bad}")))
}

fn small_sweep() -> Result<SweepSpec> {
    Ok(SweepSpec {
        base: SbmParams::new(2, 2, 15, 0.6, 0.4, 0.3, 0.1)?,
        vary: Vary::Alpha,
        grid: vec![0.2, 0.4],
        trials: 2,
        base_seed: 5,
        eta: 0.01,
        k: None,
    })
}

fn experiments_sweep_determinism() -> Result<(bool, String)> {
    let spec = small_sweep()?;
    let mut outputs = Vec::new();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Degenerate(e.to_string()))?;
        let rows = pool.install(|| sweep(&spec))?;
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf)?;
        outputs.push(buf);
    }
    Ok((outputs[0] == outputs[1], format!("rows=4 bytes={}", outputs[0].len())))
}

fn mean_error(p: &SbmParams, eta: f64, seeds: std::ops::Range<u64>) -> Result<(f64, f64)> {
    let count = (seeds.end - seeds.start) as f64;
    let (mut t, mut d) = (0.0, 0.0);
    for seed in seeds {
        let rec = run_sbm_trial(p, p.default_k(), eta, seed)?;
        t += rec.target_error;
        d += rec.domain_error;
    }
    Ok((t / count, d / count))
}

fn experiments_trend_n() -> Result<(bool, String)> {
    let mut means = Vec::new();
    for n in [4usize, 8, 16, 32] {
        let p = SbmParams::new(3, 2, n, 0.6, 0.4, 0.4, 0.1)?;
        means.push(mean_error(&p, theorem_eta_bound(&p, 0.25)?, 0..10)?.0);
    }
    let inversions = means.windows(2).filter(|w| w[1] > w[0] + 0.005).count();
    let ok = inversions == 0 && means[3] <= means[0];
    let shown: Vec<String> = means.iter().map(|&v| e(v)).collect();
    Ok((ok, format!("n=4,8,16,32 mean_target_error=[{}]", shown.join(","))))
}

fn experiments_trend_gap() -> Result<(bool, String)> {
    let mut means = Vec::new();
    for alpha in [0.1, 0.2, 0.3, 0.4] {
        let p = SbmParams::new(3, 2, 20, 0.6, alpha, 0.3, 0.2)?;
        means.push(mean_error(&p, 0.01, 0..10)?.0);
    }
    let inversions = means.windows(2).filter(|w| w[1] > w[0] + 0.02).count();
    let ok = inversions == 0 && means[3] < means[0];
    let shown: Vec<String> = means.iter().map(|&v| e(v)).collect();
    Ok((ok, format!("alpha-gamma=-0.1,0,0.1,0.2 mean_target_error=[{}]", shown.join(","))))
}

fn experiments_domain() -> Result<(bool, String)> {
    let p = SbmParams::new(3, 2, 30, 0.6, 0.4, 0.4, 0.1)?;
    let (t, d) = mean_error(&p, theorem_eta_bound(&p, 0.25)?, 0..10)?;
    Ok((d <= 0.05 && t <= 0.05, format!("mean_domain_error={} mean_target_error={}", e(d), e(t))))
}

fn experiments_fit() -> Result<(bool, String)> {
    let ratios: [(f64, f64); 8] = [(2.7, 1.8), (5.3, 3.3), (5.2, 1.7), (2.1, 3.2), (2.5, 2.6), (2.0, 3.3), (1.4, 0.9), (3.9, 1.2)];
    let mut worst = 0.0_f64;
    for w1 in linspace(-20.0, 20.0, 9) {
        for w2 in linspace(-20.0, 20.0, 9) {
            let recs: Vec<ConnectivityRecord> = ratios
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| ConnectivityRecord {
                    pair_id: i.to_string(),
                    accuracy: (w1 * a.ln() + w2 * b.ln()).exp(),
                    alpha: a,
                    beta: b,
                    gamma: 1.0,
                })
                .collect();
            let fit = fit_connectivity(&recs)?;
            worst = worst.max((fit.w1 - w1).abs()).max((fit.w2 - w2).abs());
        }
    }
    Ok((worst <= 1e-9, format!("grid=81 max_err={}", e(worst))))
}

fn experiments_ablation() -> Result<(bool, String)> {
    let p = SbmParams::new(2, 2, 20, 0.6, 0.4, 0.3, 0.1)?;
    let mut ok = true;
    for seed in 0..5 {
        let g = sample_adjacency(&p, seed)?;
        ok &= ablate_cross_edges(&g, 0.0, seed)? == g;
        for f in [0.1, 0.5, 1.0] {
            ok &= ablate_cross_edges(&g, f, seed)?.edge_count() < g.edge_count();
        }
    }
    Ok((ok, "graphs=5 fractions=0,0.1,0.5,1".into()))
}

fn cli_determinism() -> Result<(bool, String)> {
    let argvs: [&[&str]; 3] = [
        &["toy", "--rho-p", "0.7", "--alpha-p", "0.15", "--beta-p", "0.1", "--gamma-p", "0.05", "--eta", "0.01"],
        &["separation", "--rho-p", "0.6", "--alpha-p", "0.2", "--beta-p", "0", "--gamma-p", "0"],
        &[
            "sbm-sweep", "--vary", "alpha", "--from", "0.2", "--to", "0.4", "--steps", "2", "--r", "2", "--m", "2", "--n",
            "12", "--rho", "0.6", "--beta", "0.3", "--gamma", "0.1", "--trials", "2", "--seed", "3",
        ],
    ];
    let mut ok = true;
    for argv in argvs {
        let mut outs = Vec::new();
        for threads in [1, 2] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Degenerate(e.to_string()))?;
            outs.push(pool.install(|| crate::cli::render(argv.iter().copied())));
        }
        ok &= match (&outs[0], &outs[1]) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
    }
    Ok((ok, "commands=3 thread_counts=1,2".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_rejected() {
        assert!(run_suites(&["nope".to_string()]).is_err());
    }

    #[test]
    fn graph_suite_passes() {
        let out = run_suites(&["graph".to_string()]).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|o| o.passed), "{}", render_text(&out));
    }

    #[test]
    fn samplers_meet_their_contracts() {
        let mut r = rng(99);
        for _ in 0..100 {
            assert!(random_toy_ordered(&mut r).satisfies_ordering());
            let f = toy_pair_params(&random_toy_flipped(&mut r));
            assert!(f.alpha < f.gamma);
            let s = random_sbm(&mut r, 3, 2, 4);
            assert!(s.check_ordering().is_ok());
            let q = random_orthonormal(&mut r, 4);
            assert!((q.transpose() * &q - DMatrix::identity(4, 4)).norm() < 1e-12);
        }
    }
}
