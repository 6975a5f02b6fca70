use std::io::Write;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{run_trial_on_graph, TrialRecord};
use crate::error::{Error, Result};
use crate::numfmt::sig17;
use crate::sbm::{sample_adjacency, SampledGraph, SbmParams};

pub const CSV_HEADER: [&str; 10] = [
    "vary",
    "value",
    "trial",
    "seed",
    "target_error",
    "domain_error",
    "scaling_factor",
    "op_norm_dev",
    "cos_src_tgt",
    "cos_src_dom",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vary {
    Alpha,
    Beta,
    Gamma,
    Rho,
    N,
    Eta,
}

impl Vary {
    pub fn name(self) -> &'static str {
        match self {
            Vary::Alpha => "alpha",
            Vary::Beta => "beta",
            Vary::Gamma => "gamma",
            Vary::Rho => "rho",
            Vary::N => "n",
            Vary::Eta => "eta",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "alpha" => Vary::Alpha,
            "beta" => Vary::Beta,
            "gamma" => Vary::Gamma,
            "rho" => Vary::Rho,
            "n" => Vary::N,
            "eta" => Vary::Eta,
            _ => return Err(Error::param("vary", format!("unknown parameter `{s}`"))),
        })
    }
}

/// Evenly spaced values, inclusive of both ends.
pub fn linspace(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..steps)
            .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// Seed for trial `trial` at grid point `grid_index`.
pub fn derive_seed(base_seed: u64, grid_index: usize, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(((grid_index as u64) << 32) | trial as u64);
    rng.next_u64()
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: SbmParams,
    pub vary: Vary,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub eta: f64,
    /// Defaults to `r + m - 1`.
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub vary: &'static str,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub record: TrialRecord,
}

fn point(spec: &SweepSpec, value: f64) -> Result<(SbmParams, f64)> {
    let mut p = spec.base;
    let mut eta = spec.eta;
    match spec.vary {
        Vary::Alpha => p.alpha = value,
        Vary::Beta => p.beta = value,
        Vary::Gamma => p.gamma = value,
        Vary::Rho => p.rho = value,
        Vary::Eta => eta = value,
        Vary::N => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::param("n", format!("grid value {value} is not a positive integer")));
            }
            p.n = value as usize;
        }
    }
    p.validate()?;
    if !(eta > 0.0) {
        return Err(Error::NonPositiveEta(eta));
    }
    Ok((p, eta))
}

/// Every grid point is validated before any trial runs. Rows come back in
/// grid order, then trial order, whatever the thread count.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let points: Vec<(SbmParams, f64)> = spec.grid.iter().map(|&v| point(spec, v)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|g| (0..spec.trials).map(move |t| (g, t)))
        .collect();
    jobs.par_iter()
        .map(|&(gi, trial)| {
            let (p, eta) = points[gi];
            let seed = derive_seed(spec.base_seed, gi, trial);
            let k = spec.k.unwrap_or_else(|| p.default_k());
            let record = run_trial_on_graph(&sample_adjacency(&p, seed)?, k, eta)?;
            Ok(SweepRow {
                vary: spec.vary.name(),
                value: spec.grid[gi],
                trial,
                seed,
                record,
            })
        })
        .collect()
}

/// Removes `round(fraction · count)` of the across-domain edges, chosen by
/// a seeded shuffle.
pub fn ablate_cross_edges(g: &SampledGraph, fraction: f64, seed: u64) -> Result<SampledGraph> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::param("fraction", "must lie in [0, 1]"));
    }
    let p = g.params();
    let n = g.n_nodes();
    let mut cross: Vec<(u32, u32)> = Vec::new();
    for x in 0..n {
        let dx = p.label(x).domain_id;
        for &y in g.neighbors(x) {
            if (y as usize) > x && p.label(y as usize).domain_id != dx {
                cross.push((x as u32, y));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cross.shuffle(&mut rng);
    let remove = (fraction * cross.len() as f64).round() as usize;
    let mut dropped: Vec<(u32, u32)> = cross[..remove].to_vec();
    dropped.sort_unstable();
    let rows: Vec<Vec<u32>> = (0..n)
        .map(|x| {
            g.neighbors(x)
                .iter()
                .copied()
                .filter(|&y| {
                    let key = if (x as u32) < y { (x as u32, y) } else { (y, x as u32) };
                    dropped.binary_search(&key).is_err()
                })
                .collect()
        })
        .collect();
    Ok(SampledGraph::from_rows(*p, g.seed(), rows))
}

/// One trial per (fraction, trial): sample, ablate, run the pipeline.
pub fn ablation_sweep(base: &SbmParams, fractions: &[f64], trials: usize, base_seed: u64, eta: f64, k: Option<usize>) -> Result<Vec<SweepRow>> {
    base.validate()?;
    for &f in fractions {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::param("fraction", format!("{f} is outside [0, 1]")));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..fractions.len())
        .flat_map(|g| (0..trials).map(move |t| (g, t)))
        .collect();
    let k = k.unwrap_or_else(|| base.default_k());
    jobs.par_iter()
        .map(|&(gi, trial)| {
            // the graph depends only on the trial so fractions are paired
            let seed = derive_seed(base_seed, 0, trial);
            let g = sample_adjacency(base, seed)?;
            let ablated = ablate_cross_edges(&g, fractions[gi], derive_seed(base_seed, 1, trial))?;
            Ok(SweepRow {
                vary: "fraction",
                value: fractions[gi],
                trial,
                seed,
                record: run_trial_on_graph(&ablated, k, eta)?,
            })
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        let r = &row.record;
        w.write_record([
            row.vary.to_string(),
            sig17(row.value),
            row.trial.to_string(),
            row.seed.to_string(),
            sig17(r.target_error),
            sig17(r.domain_error),
            sig17(r.scaling_factor_empirical),
            sig17(r.op_norm_deviation),
            sig17(r.src_vs_tgt_cos),
            sig17(r.src_vs_dom_cos),
        ])?;
    }
    w.flush()?;
    Ok(())
}
