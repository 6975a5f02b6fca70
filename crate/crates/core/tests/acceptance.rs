//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::time::Instant;

use connectgraph::cli;
use connectgraph::experiments::{
    deviation_norm, fit_connectivity, linspace, paper_table_fit, paper_tables, records_for, run_expected_trial,
    run_sbm_trial, run_separation, run_toy, sweep, BetaConvention, ConnectivityRecord, SweepSpec, Vary,
};
use connectgraph::probe::dual_path_deviation;
use connectgraph::sbm::{
    closed_form_spectrum, effective_xi, expected_adjacency, ideal_scaling_factor, sample_adjacency, theorem_eta_bound,
    SbmParams,
};
use connectgraph::spectral::{operator_norm, rank_k_approx, rank_k_perturbation_bound, symmetric_eigensystem, DEFAULT_TOL};
use connectgraph::verify::{
    corpus, random_sbm, random_separation_existence, random_toy_flipped, random_toy_ordered, scaling_law_deviation,
};
use connectgraph::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xacce_0000 + tag)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn toy() -> Result<(bool, String)> {
    let start = Instant::now();
    let mut rng = rng(1);
    let mut bad_ordered = 0;
    let mut bad_flipped = 0;
    for _ in 0..200 {
        if run_toy(&random_toy_ordered(&mut rng), 0.01)?.target_error != Some(0.0) {
            bad_ordered += 1;
        }
        if run_toy(&random_toy_flipped(&mut rng), 0.01)?.target_error != Some(1.0) {
            bad_flipped += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        bad_ordered == 0 && bad_flipped == 0 && secs < 5.0,
        format!("ordered misses {bad_ordered}/200, flipped misses {bad_flipped}/200, {secs:.2}s"),
    ))
}

fn separation() -> Result<(bool, String)> {
    let start = Instant::now();
    let mut rng = rng(2);
    let mut bad = 0;
    let mut worst_term = 0.0_f64;
    for i in 0..100 {
        let p = random_separation_existence(&mut rng);
        let lambda = 0.1 + 0.05 * i as f64;
        let rep = run_separation(&p, lambda, 0.01)?;
        worst_term = worst_term.max((rep.dann_domain_term - 3.0 * lambda / 8.0).abs());
        if rep.contrastive_err != 0.0 || rep.erm_err != 1.0 / 3.0 || rep.dann_err != 1.0 / 3.0 {
            bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        bad == 0 && worst_term <= 1e-12 && secs < 10.0,
        format!("error mismatches {bad}/100, max |domain term - 3λ/8| {worst_term:.2e}, {secs:.2}s"),
    ))
}

fn grid() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for r in [2, 3, 4] {
        for m in [2, 3] {
            for n in [1, 2, 5] {
                out.push((r, m, n));
            }
        }
    }
    out
}

fn spectrum() -> Result<(bool, String)> {
    let mut rng = rng(3);
    let mut worst = 0.0_f64;
    for (r, m, n) in grid() {
        for _ in 0..5 {
            let p = random_sbm(&mut rng, r, m, n);
            let es = symmetric_eigensystem(&expected_adjacency(&p)?.matrix, DEFAULT_TOL)?;
            let want = closed_form_spectrum(&p).sorted_values(p.n_nodes());
            if want.len() != es.eigenvalues.len() {
                return Ok((false, format!("length mismatch at r={r} m={m} n={n}")));
            }
            for (a, b) in es.eigenvalues.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok((worst <= 1e-9, format!("90 parameter sets, max eigenvalue deviation {worst:.2e}")))
}

fn prediction_law() -> Result<(bool, String)> {
    let mut rng = rng(4);
    let mut worst = 0.0_f64;
    let mut min_margin = f64::INFINITY;
    let mut bound_cases = 0;
    for (r, m, n) in grid() {
        for _ in 0..5 {
            let p = random_sbm(&mut rng, r, m, n);
            for xi in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
                worst = worst.max(scaling_law_deviation(&p, xi)?);
            }
            if p.alpha > p.gamma {
                for eps in [0.1, 0.25, 0.45] {
                    let eta = theorem_eta_bound(&p, eps)?;
                    let formula = ideal_scaling_factor(&p, effective_xi(&p, eta))?;
                    let empirical = run_expected_trial(&p, p.default_k(), eta)?.scaling_factor_empirical;
                    min_margin = min_margin.min(formula.min(empirical) - (1.0 - eps));
                    bound_cases += 1;
                }
            }
        }
    }
    Ok((
        worst <= 1e-8 && min_margin >= -1e-12,
        format!("max row deviation {worst:.2e}; {bound_cases} bound cases, min factor - (1-ε) {min_margin:.3e}"),
    ))
}

fn dual_path() -> Result<(bool, String)> {
    let graphs = corpus()?;
    let mut worst = 0.0_f64;
    let mut worst_name = "";
    for (name, g, k) in graphs {
        let d = dual_path_deviation(g, *k, 0.01)?;
        if d >= worst {
            worst = d;
            worst_name = name;
        }
    }
    Ok((worst <= 1e-8, format!("{} graphs, max deviation {worst:.2e} ({worst_name})", graphs.len())))
}

fn favorable() -> Result<SbmParams> {
    SbmParams::new(3, 2, 200, 0.6, 0.4, 0.4, 0.1)
}

fn sampled_generalization() -> Result<(bool, String)> {
    let start = Instant::now();
    let p = favorable()?;
    let eta = theorem_eta_bound(&p, 0.25)?;
    let mut target = Vec::new();
    let mut domain = Vec::new();
    for seed in 0..10 {
        let rec = run_sbm_trial(&p, 4, eta, seed)?;
        target.push(rec.target_error);
        domain.push(rec.domain_error);
    }
    let (t, d) = (mean(&target), mean(&domain));
    let secs = start.elapsed().as_secs_f64();
    Ok((
        t <= 0.02 && d <= 0.02 && secs < 120.0,
        format!("mean target error {t:.4}, mean domain error {d:.4}, {secs:.1}s"),
    ))
}

fn sweep_means(spec: &SweepSpec) -> Result<Vec<f64>> {
    let rows = sweep(spec)?;
    Ok(spec
        .grid
        .iter()
        .map(|&v| {
            let errs: Vec<f64> = rows.iter().filter(|r| r.value == v).map(|r| r.record.target_error).collect();
            mean(&errs)
        })
        .collect())
}

fn decay_in_n() -> Result<(bool, String)> {
    let base = favorable()?;
    let spec = SweepSpec {
        base,
        vary: Vary::N,
        grid: vec![25.0, 50.0, 100.0, 200.0, 400.0],
        trials: 10,
        base_seed: 7,
        eta: theorem_eta_bound(&base, 0.25)?,
        k: Some(4),
    };
    let means = sweep_means(&spec)?;
    let mut inversions = 0;
    let mut too_big = false;
    for w in means.windows(2) {
        if w[1] > w[0] {
            inversions += 1;
            too_big |= w[1] - w[0] > 0.005;
        }
    }
    let (first, last) = (means[0], means[4]);
    let shape = last <= first / 3.0 || (first <= 0.01 && last <= 0.01);
    let shown: Vec<String> = means.iter().map(|v| format!("{v:.4}")).collect();
    Ok((
        inversions <= 1 && !too_big && shape,
        format!("mean target error over n=25..400: [{}]", shown.join(", ")),
    ))
}

fn threshold() -> Result<(bool, String)> {
    let spec = SweepSpec {
        base: SbmParams::new(3, 2, 200, 0.6, 0.05, 0.3, 0.2)?,
        vary: Vary::Alpha,
        grid: linspace(0.05, 0.35, 7),
        trials: 10,
        base_seed: 7,
        eta: 0.01,
        k: None,
    };
    let means = sweep_means(&spec)?;
    let shown: Vec<String> = means.iter().map(|v| format!("{v:.3}")).collect();
    Ok((
        means[0] >= 0.5 && means[6] <= 0.05,
        format!("mean target error over α=0.05..0.35: [{}]", shown.join(", ")),
    ))
}

fn perturbation() -> Result<(bool, String)> {
    let p = SbmParams::new(2, 2, 50, 0.6, 0.4, 0.3, 0.1)?;
    let k = p.default_k();
    let tilde = expected_adjacency(&p)?.matrix;
    let tilde_k = rank_k_approx(&tilde, k)?;
    let mut applicable = 0;
    let mut violations = 0;
    let mut max_ratio = 0.0_f64;
    let mut seed = 0;
    while applicable < 40 && seed < 200 {
        let a = sample_adjacency(&p, seed)?.to_dense();
        seed += 1;
        let b = rank_k_perturbation_bound(&a, &tilde, k)?;
        if !b.applicable {
            continue;
        }
        applicable += 1;
        let lhs = operator_norm(&(rank_k_approx(&a, k)? - &tilde_k))?;
        max_ratio = max_ratio.max(lhs / b.bound);
        if lhs > b.bound {
            violations += 1;
        }
    }
    let mut base = 0.0;
    let mut worst_growth = 0.0_f64;
    let mut shown = Vec::new();
    for (i, n) in [24usize, 48, 96, 192].into_iter().enumerate() {
        let q = SbmParams::new(2, 2, n, 0.6, 0.4, 0.3, 0.1)?;
        let mut vals = Vec::new();
        for s in 0..10 {
            let g = sample_adjacency(&q, 900 + s)?;
            vals.push(deviation_norm(&g)? / (g.n_nodes() as f64).sqrt());
        }
        let m = mean(&vals);
        if i == 0 {
            base = m;
        }
        worst_growth = worst_growth.max(vals.iter().fold(0.0_f64, |a, &v| a.max(v)) / base);
        shown.push(format!("{m:.3}"));
    }
    Ok((
        applicable == 40 && violations == 0 && worst_growth <= 3.0,
        format!(
            "{applicable} applicable graphs, {violations} violations, max lhs/bound {max_ratio:.3}; ‖A-Ã‖/√N at N=96..768 [{}], max/base {worst_growth:.3}",
            shown.join(", ")
        ),
    ))
}

fn disentanglement() -> Result<(bool, String)> {
    let mut rng = rng(10);
    let (mut worst_dom, mut worst_st) = (0.0_f64, f64::INFINITY);
    for (r, m, n) in grid() {
        let p = random_sbm(&mut rng, r, m, n);
        let rec = run_expected_trial(&p, p.default_k(), 0.01)?;
        worst_dom = worst_dom.max(rec.src_vs_dom_cos.abs()).max(rec.tgt_vs_dom_cos.abs());
        worst_st = worst_st.min(rec.src_vs_tgt_cos);
    }
    Ok((
        worst_dom <= 1e-8 && worst_st >= 0.99,
        format!("max |cos(class, domain)| {worst_dom:.2e}, min cos(src, tgt) {worst_st:.6}"),
    ))
}

fn regression() -> Result<(bool, String)> {
    let (w1, w2) = (14.9, 2.7);
    let base = records_for(&paper_tables()?, BetaConvention::Average);
    let make = |noise: &dyn Fn() -> f64| -> Vec<ConnectivityRecord> {
        base.iter()
            .map(|r| ConnectivityRecord {
                accuracy: ((r.alpha / r.gamma).powf(w1) * (r.beta / r.gamma).powf(w2)) * noise(),
                ..r.clone()
            })
            .collect()
    };
    let exact = fit_connectivity(&make(&|| 1.0))?;
    let exact_ok = (exact.w1 - w1).abs() <= 1e-9 && (exact.w2 - w2).abs() <= 1e-9 && (exact.r_squared - 1.0).abs() <= 1e-12;
    let mut rng = rng(11);
    let normal = Normal::new(0.0, 0.05).expect("valid normal");
    let mut worst_rel = 0.0_f64;
    for _ in 0..50 {
        let draws: Vec<f64> = (0..base.len()).map(|_| normal.sample(&mut rng)).collect();
        let cell = std::cell::Cell::new(0);
        let noisy = make(&|| {
            let i = cell.get();
            cell.set(i + 1);
            draws[i].exp()
        });
        let fit = fit_connectivity(&noisy)?;
        worst_rel = worst_rel.max(((fit.w1 - w1) / w1).abs()).max(((fit.w2 - w2) / w2).abs());
    }
    let report = paper_table_fit()?;
    let fits: Vec<String> = report
        .fits
        .iter()
        .map(|f| format!("{:?} w1={:.2} w2={:.2} R2={:.2}", f.beta_convention, f.fit.w1, f.fit.w2, f.fit.r_squared))
        .collect();
    Ok((
        exact_ok && worst_rel <= 0.15,
        format!(
            "exact error w1 {:.1e} w2 {:.1e}; noisy max rel error {worst_rel:.3}; bundled tables (diagnostic, published 14.9/2.7/0.78): {}",
            (exact.w1 - w1).abs(),
            (exact.w2 - w2).abs(),
            fits.join("; ")
        ),
    ))
}

fn determinism() -> Result<(bool, String)> {
    let argvs: [&[&str]; 4] = [
        &["verify"],
        &["toy", "--rho-p", "0.7", "--alpha-p", "0.15", "--beta-p", "0.1", "--gamma-p", "0.05", "--eta", "0.01"],
        &[
            "sbm-sweep", "--vary", "alpha", "--from", "0.05", "--to", "0.35", "--steps", "7", "--r", "3", "--m", "2", "--n",
            "50", "--rho", "0.6", "--beta", "0.3", "--gamma", "0.2", "--trials", "3", "--seed", "7",
        ],
        &["ablate", "--r", "2", "--m", "2", "--n", "30", "--rho", "0.6", "--alpha", "0.4", "--beta", "0.3", "--gamma", "0.1", "--trials", "2"],
    ];
    let mut mismatched = Vec::new();
    for argv in argvs {
        let mut outs = Vec::new();
        for threads in [1, 2, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
            outs.push(pool.install(|| cli::render(argv.iter().copied())).map_err(|e| e.to_string()));
        }
        let first = outs[0].clone();
        if first.is_err() || outs.iter().any(|o| *o != first) || cli::render(argv.iter().copied()).ok() != first.ok() {
            mismatched.push(argv[0]);
        }
    }
    Ok((
        mismatched.is_empty(),
        format!("verify, toy, sbm-sweep and ablate at 1/2/8 threads; mismatches {mismatched:?}"),
    ))
}

type Criterion = (&'static str, fn() -> Result<(bool, String)>);

fn main() {
    let criteria: [Criterion; 12] = [
        ("toy example correctness", toy),
        ("separation proposition", separation),
        ("closed-form spectrum", spectrum),
        ("ideal prediction law", prediction_law),
        ("dual-path probe equivalence", dual_path),
        ("sampled SBM generalization", sampled_generalization),
        ("error decay in n", decay_in_n),
        ("threshold crossing", threshold),
        ("perturbation machinery", perturbation),
        ("disentanglement", disentanglement),
        ("regression fitter", regression),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failed += 1;
        }
        println!("{} criterion {:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
