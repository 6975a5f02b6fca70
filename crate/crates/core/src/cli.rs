//! Command-line front end.
//!
//! `render` parses an argv (without the program name) and returns the text
//! that would be written; `run` adds the thread pool, the output file and
//! the exit code.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::error::Error;
use crate::experiments::{
    ablation_sweep, fit_connectivity, linspace, paper_table_fit, run_expected_trial, run_sbm_trial, run_separation,
    run_toy, sweep, write_csv, ConnectivityRecord, SweepRow, SweepSpec, TrialRecord, Vary,
};
use crate::graph::{SeparationKernelParams, ToyKernelParams};
use crate::numfmt;
use crate::sbm::{theorem_eta_bound, SbmParams};
use crate::verify::{render_text, run_suites, CheckOutcome};

pub const SEED_ENV: &str = "CONNECTGRAPH_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or flag values; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure inside a computation; exit code 1.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

fn flag(name: &str) -> String {
    format!("--{}", name.replace('_', "-"))
}

fn flagify(text: &str) -> String {
    text.split(" + ")
        .map(|t| match t.split_once(' ') {
            Some((c, name)) => format!("{c} {}", flag(name)),
            None => flag(t),
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => CliError::Usage(format!("invalid value for {}: {reason}", flag(&name))),
            Error::NotNormalized { what, sum } => CliError::Usage(format!("{} must equal 1, got {sum}", flagify(&what))),
            Error::NonPositiveEta(v) => CliError::Usage(format!("invalid value for --eta: must be positive, got {v}")),
            Error::RankOutOfRange { k, max } => CliError::Usage(format!("invalid value for --k: {k} is outside 1..={max}")),
            Error::OrderingViolated(msg) => CliError::Usage(format!("parameter ordering violated: {msg}")),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "connectgraph", version, about = "Augmentation-graph simulator for contrastive transfer")]
struct Cli {
    /// Worker threads for sweeps (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Base seed; CONNECTGRAPH_SEED takes precedence when set.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[arg(long)]
    rho_p: f64,
    #[arg(long)]
    alpha_p: f64,
    #[arg(long)]
    beta_p: f64,
    #[arg(long)]
    gamma_p: f64,
}

#[derive(Debug, Args)]
struct BlockArgs {
    #[arg(long)]
    r: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    gamma: f64,
}

impl BlockArgs {
    fn params(&self) -> Result<SbmParams, CliError> {
        Ok(SbmParams::new(self.r, self.m, self.n, self.rho, self.alpha, self.beta, self.gamma)?)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Four-node toy graph: embed with k = 3 and probe on the source domain.
    Toy {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 0.01)]
        eta: f64,
    },
    /// Eight-node cycle: ERM, DANN and contrastive errors on the target.
    Separation {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.01)]
        eta: f64,
    },
    /// One stochastic block model trial.
    SbmRun {
        #[command(flatten)]
        block: BlockArgs,
        /// Defaults to the bound for ε = 1/4 when α > γ, else 0.01.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// Use the expected adjacency instead of a sample.
        #[arg(long)]
        expected: bool,
    },
    /// Sweep one parameter over an evenly spaced grid.
    SbmSweep {
        #[arg(long)]
        vary: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0.01)]
        eta: f64,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Delete a growing fraction of the cross-domain edges.
    Ablate {
        #[command(flatten)]
        block: BlockArgs,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 1.0)]
        to: f64,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0.01)]
        eta: f64,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Fit accuracy against connectivity ratios from a CSV file with
    /// columns pair_id,accuracy,alpha,beta,gamma.
    Fit {
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit the bundled accuracy and connectivity tables.
    PaperTables,
    /// Run the invariant suites.
    Verify {
        /// Repeat to select several suites; all run by default.
        #[arg(long)]
        suite: Vec<String>,
    },
}

fn seed(cli: &Cli) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid value for {SEED_ENV}: `{v}` is not an unsigned integer"))),
        Err(_) => Ok(cli.seed),
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn only_json(format: Option<Format>, command: &str) -> Result<(), CliError> {
    match format {
        Some(Format::Csv) => Err(CliError::Usage(format!("invalid value for --format: `{command}` only writes json"))),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct RowJson<'a> {
    vary: &'a str,
    #[serde(serialize_with = "numfmt::ser_f64")]
    value: f64,
    trial: usize,
    seed: u64,
    record: &'a TrialRecord,
}

fn rows_out(rows: &[SweepRow], format: Option<Format>) -> Result<String, CliError> {
    match format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(rows, &mut buf)?;
            String::from_utf8(buf).map_err(|e| CliError::Numerical(e.to_string()))
        }
        Format::Json => json(
            &rows
                .iter()
                .map(|r| RowJson {
                    vary: r.vary,
                    value: r.value,
                    trial: r.trial,
                    seed: r.seed,
                    record: &r.record,
                })
                .collect::<Vec<_>>(),
        ),
    }
}

fn verify_out(outcomes: &[CheckOutcome], format: Option<Format>) -> Result<String, CliError> {
    match format {
        None => Ok(render_text(outcomes)),
        Some(Format::Json) => json(&outcomes),
        Some(Format::Csv) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for o in outcomes {
                w.serialize(o).map_err(Error::from)?;
            }
            let buf = w.into_inner().map_err(|e| CliError::Numerical(e.to_string()))?;
            String::from_utf8(buf).map_err(|e| CliError::Numerical(e.to_string()))
        }
    }
}

fn sweep_base(
    vary: Vary,
    from: f64,
    r: usize,
    m: usize,
    given: [(&'static str, Option<f64>); 5],
) -> Result<SbmParams, CliError> {
    let mut vals = [0.0; 5];
    for (i, (name, v)) in given.iter().enumerate() {
        vals[i] = match (v, vary.name() == *name) {
            (_, true) => from,
            (Some(v), false) => *v,
            (None, false) => return Err(CliError::Usage(format!("missing required flag {}", flag(name)))),
        };
    }
    if vals[0] < 1.0 || vals[0].fract() != 0.0 {
        return Err(CliError::Usage(format!("invalid value for --n: {} is not a positive integer", vals[0])));
    }
    Ok(SbmParams::new(r, m, vals[0] as usize, vals[1], vals[2], vals[3], vals[4])?)
}

/// Parsed and executed command, plus whether `verify` saw a failure.
fn execute(cli: &Cli) -> Result<(String, bool), CliError> {
    let seed = seed(cli)?;
    let text = match &cli.command {
        Command::Toy { kernel, eta } => {
            only_json(cli.format, "toy")?;
            let p = ToyKernelParams::new(kernel.rho_p, kernel.alpha_p, kernel.beta_p, kernel.gamma_p)?;
            json(&run_toy(&p, *eta)?)?
        }
        Command::Separation { kernel, lambda, eta } => {
            only_json(cli.format, "separation")?;
            let p = SeparationKernelParams::new(kernel.rho_p, kernel.alpha_p, kernel.beta_p, kernel.gamma_p)?;
            if !(*lambda > 0.0) {
                return Err(CliError::Usage(format!("invalid value for --lambda: must be positive, got {lambda}")));
            }
            json(&run_separation(&p, *lambda, *eta)?)?
        }
        Command::SbmRun { block, eta, k, expected } => {
            only_json(cli.format, "sbm-run")?;
            let p = block.params()?;
            let eta = match eta {
                Some(v) => *v,
                None if p.alpha > p.gamma => theorem_eta_bound(&p, 0.25)?,
                None => 0.01,
            };
            let k = k.unwrap_or_else(|| p.default_k());
            let rec = if *expected {
                run_expected_trial(&p, k, eta)?
            } else {
                run_sbm_trial(&p, k, eta, seed)?
            };
            json(&rec)?
        }
        Command::SbmSweep {
            vary,
            from,
            to,
            steps,
            r,
            m,
            n,
            rho,
            alpha,
            beta,
            gamma,
            trials,
            eta,
            k,
        } => {
            let vary = Vary::parse(vary)?;
            let base = sweep_base(
                vary,
                *from,
                *r,
                *m,
                [
                    ("n", n.map(|v| v as f64)),
                    ("rho", *rho),
                    ("alpha", *alpha),
                    ("beta", *beta),
                    ("gamma", *gamma),
                ],
            )?;
            let spec = SweepSpec {
                base,
                vary,
                grid: linspace(*from, *to, *steps),
                trials: *trials,
                base_seed: seed,
                eta: *eta,
                k: *k,
            };
            rows_out(&sweep(&spec)?, cli.format)?
        }
        Command::Ablate {
            block,
            from,
            to,
            steps,
            trials,
            eta,
            k,
        } => {
            let p = block.params()?;
            if !(*eta > 0.0) {
                return Err(Error::NonPositiveEta(*eta).into());
            }
            rows_out(&ablation_sweep(&p, &linspace(*from, *to, *steps), *trials, seed, *eta, *k)?, cli.format)?
        }
        Command::Fit { input } => {
            only_json(cli.format, "fit")?;
            let text = std::fs::read_to_string(input)
                .map_err(|e| CliError::Usage(format!("invalid value for --input: {}: {e}", input.display())))?;
            let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
            let records: Vec<ConnectivityRecord> = rdr
                .deserialize()
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("invalid value for --input: {e}")))?;
            json(&fit_connectivity(&records)?)?
        }
        Command::PaperTables => {
            only_json(cli.format, "paper-tables")?;
            json(&paper_table_fit()?)?
        }
        Command::Verify { suite } => {
            let outcomes = run_suites(suite)?;
            let failed = outcomes.iter().any(|o| !o.passed);
            return Ok((verify_out(&outcomes, cli.format)?, failed));
        }
    };
    Ok((text, false))
}

fn parse<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(std::iter::once(OsString::from("connectgraph")).chain(args.into_iter().map(Into::into)))
}

/// Output of a command given its arguments (without the program name), on
/// the current thread pool. `--output` and `--threads` are ignored.
pub fn render<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = parse(args).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(&cli).map(|(text, _)| text)
}

/// Full entry point: `args` includes the program name.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(failed) => i32::from(failed),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<bool, CliError> {
    if cli.threads == Some(0) {
        return Err(CliError::Usage("invalid value for --threads: must be at least 1".into()));
    }
    if let Some(path) = &cli.output {
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
        if parent.is_some_and(|p| !p.is_dir()) {
            return Err(CliError::Usage(format!("invalid value for --output: directory of {} does not exist", path.display())));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let (text, failed) = pool.install(|| execute(cli))?;
    match &cli.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Usage(format!("invalid value for --output: cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_names() {
        assert_eq!(flag("rho_p"), "--rho-p");
        assert_eq!(flagify("rho_p + 2 alpha_p"), "--rho-p + 2 --alpha-p");
    }

    #[test]
    fn validation_names_the_flag() {
        let err = render(["toy", "--rho-p", "-0.1", "--alpha-p", "0.5", "--beta-p", "0.3", "--gamma-p", "0.3"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--rho-p"), "{err}");
        let err = render(["toy", "--rho-p", "0.5", "--alpha-p", "0.5", "--beta-p", "0.3", "--gamma-p", "0.3"]).unwrap_err();
        assert!(err.to_string().contains("--gamma-p"), "{err}");
    }

    #[test]
    fn sweep_requires_unvaried_params() {
        let err = render([
            "sbm-sweep", "--vary", "alpha", "--from", "0.1", "--to", "0.2", "--steps", "2", "--r", "2", "--m", "2", "--n",
            "5", "--rho", "0.6", "--gamma", "0.1",
        ])
        .unwrap_err();
        assert!(err.to_string().contains("--beta"), "{err}");
    }
}
