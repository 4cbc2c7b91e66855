//! `grabforest`: command-line front end for the grabbing-particle-system
//! library. Subcommands wire laws, simulators, exact oracles, and the
//! statistics harness together behind reproducible seeded runs.
//!
//! Exit codes: 0 success, 1 criterion failure on verification subcommands,
//! 2 usage or configuration errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "grabforest",
    version,
    about = "Grabbing particle system simulator, Galton-Watson samplers, and exact verification oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the grabbing dynamics and emit one JSONL record per replica
    #[command(name = "simulate")]
    Simulate(SimulateArgs),
    /// Check that the terminal law is exactly uniform on Φ(x) (exact oracle)
    #[command(name = "verify-lemma1")]
    VerifyLemma1(VerifyLemma1Args),
    /// Check the conditioned-forest description of the terminal state
    #[command(name = "verify-theorem1")]
    VerifyTheorem1(VerifyTheorem1Args),
    /// Empirical tree measure: squared deviation from the tree law along n
    #[command(name = "theorem2")]
    Theorem2(Theorem2Args),
    /// Joint law of the two leftmost trees vs the product form
    #[command(name = "pairfact")]
    Pairfact(PairfactArgs),
    /// First-passage identity against an independent branching recursion
    #[command(name = "kemperman")]
    Kemperman(KempermanArgs),
    /// Tree sizes of a free forest: i.i.d. first-passage marginals
    #[command(name = "dwass")]
    Dwass(DwassArgs),
    /// Exact tail-probability ratios for the critical aperiodic walk
    #[command(name = "ratio")]
    Ratio(RatioArgs),
    /// Exponential tilt of a law to a target mean
    #[command(name = "tilt")]
    Tilt(TiltArgs),
    /// Size-biased offspring law and the giant-component criterion
    #[command(name = "sizebias")]
    Sizebias(SizebiasArgs),
    /// Configuration-model cluster of a uniform arm vs joined size-biased trees
    #[command(name = "configcmp")]
    Configcmp(ConfigcmpArgs),
    /// Supercritical regime: exact law of k(n) | k(n) >= 1 and the tilted check
    #[command(name = "supercrit")]
    Supercrit(SupercritArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Float,
    Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Jsonl,
    Csv,
}

/// Options shared by every subcommand. Precedence: command-line flags,
/// then `GF_*` environment variables, then the `--config` TOML file,
/// then built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonOpts {
    /// Reproduction law pmf `v:p,v:p,...`; rational mode accepts fractions
    #[arg(long, env = "GF_MU")]
    mu: Option<String>,
    /// Arithmetic mode for subcommands that support both
    #[arg(long, env = "GF_MODE", value_enum)]
    mode: Option<Mode>,
    /// Seed for the ChaCha8 generator; required by randomized subcommands
    #[arg(long, env = "GF_SEED")]
    seed: Option<u64>,
    /// Number of Monte Carlo replicas
    #[arg(long, env = "GF_REPS")]
    reps: Option<u64>,
    /// Comma-separated list of system sizes n
    #[arg(long, env = "GF_N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Output path stem; artifacts are written as <out>.json and <out>.csv
    #[arg(long, env = "GF_OUT")]
    out: Option<PathBuf>,
    /// Row format for tabular artifacts
    #[arg(long, env = "GF_FORMAT", value_enum)]
    format: Option<OutputFormat>,
    /// Worker threads for replica fan-out (0 = rayon default); results are
    /// identical for any thread count
    #[arg(long, env = "GF_THREADS")]
    threads: Option<usize>,
    /// Optional TOML config file supplying any of the above
    #[arg(long, env = "GF_CONFIG")]
    config: Option<PathBuf>,
    /// Also write plot-ready two-column CSVs, one per statistic
    #[arg(long)]
    plot: bool,
}

/// Key-value config file contents; unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mu: Option<String>,
    mode: Option<Mode>,
    seed: Option<u64>,
    reps: Option<u64>,
    n: Option<Vec<usize>>,
    out: Option<PathBuf>,
    format: Option<OutputFormat>,
    threads: Option<usize>,
}

/// Fully resolved run configuration, embedded verbatim in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub law: Option<String>,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub n_values: Vec<usize>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub threads: usize,
    pub rng: &'static str,
}

impl CommonOpts {
    fn resolve(&self) -> Result<RunConfig> {
        let file: FileConfig = match &self.config {
            None => FileConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("cannot parse config file {}", path.display()))?
            }
        };
        Ok(RunConfig {
            law: self.mu.clone().or(file.mu),
            mode: self.mode.or(file.mode).unwrap_or(Mode::Float),
            seed: self.seed.or(file.seed),
            reps: self.reps.or(file.reps),
            n_values: self.n.clone().or(file.n).unwrap_or_default(),
            out: self.out.clone().or(file.out),
            format: self.format.or(file.format).unwrap_or(OutputFormat::Jsonl),
            threads: self.threads.or(file.threads).unwrap_or(0),
            rng: "chacha8",
        })
    }
}

impl RunConfig {
    pub fn law_text(&self) -> Result<&str> {
        self.law
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("missing --mu (or GF_MU / config `mu`)"))
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            anyhow::anyhow!("this subcommand is randomized: an explicit --seed is required")
        })
    }

    pub fn reps_or(&self, default: u64) -> u64 {
        self.reps.unwrap_or(default)
    }

    pub fn n_or(&self, default: &[usize]) -> Vec<usize> {
        if self.n_values.is_empty() {
            default.to_vec()
        } else {
            self.n_values.clone()
        }
    }

    pub fn single_n_or(&self, default: usize) -> Result<usize> {
        match self.n_values.len() {
            0 => Ok(default),
            1 => Ok(self.n_values[0]),
            more => bail!("expected a single --n value, got {more}"),
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Fixed arm counts, e.g. `--arms 2,0,0`; omit to draw arms from --mu
    /// conditioned on k(n) >= 1
    #[arg(long, value_delimiter = ',')]
    arms: Option<Vec<u32>>,
    /// Track axis order plus vertex/edge labels (full) or shapes only
    #[arg(long, value_enum, default_value = "shape")]
    fidelity: commands::Fidelity,
}

#[derive(Args, Debug)]
struct VerifyLemma1Args {
    #[command(flatten)]
    common: CommonOpts,
    /// Arm counts of the instance, e.g. `--arms 2,0,0`
    #[arg(long, value_delimiter = ',', required = true)]
    arms: Vec<u32>,
}

#[derive(Args, Debug)]
struct VerifyTheorem1Args {
    #[command(flatten)]
    common: CommonOpts,
    /// Sweep every feasible (k, n) with n up to this bound (exact check)
    #[arg(long, default_value_t = 6)]
    n_max: usize,
    /// Monte Carlo pipeline check at (--k, n = last --n): replicas
    #[arg(long)]
    mc_reps: Option<u64>,
    /// Ancestor count for the Monte Carlo check
    #[arg(long, default_value_t = 2)]
    k: usize,
}

#[derive(Args, Debug)]
struct Theorem2Args {
    #[command(flatten)]
    common: CommonOpts,
    /// Tree in text form, e.g. `(0)` or `(2,0,0)`
    #[arg(long, required = true)]
    tree: String,
}

#[derive(Args, Debug)]
struct PairfactArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long, required = true)]
    t1: String,
    #[arg(long, required = true)]
    t2: String,
}

#[derive(Args, Debug)]
struct KempermanArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Check every 1 <= k < n up to this bound
    #[arg(long, default_value_t = 40)]
    n_max: usize,
}

#[derive(Args, Debug)]
struct DwassArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Number of trees in the free forest
    #[arg(long, default_value_t = 3)]
    k: usize,
}

#[derive(Args, Debug)]
struct RatioArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Tail offset ℓ in P(Σξ <= n-ℓ) / P(Σξ <= n)
    #[arg(long, default_value_t = 5)]
    ell: usize,
    /// Additionally require |ratio - 1| below this at the largest n
    #[arg(long)]
    final_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct TiltArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Target mean of the tilted law
    #[arg(long, required = true)]
    target_mean: f64,
}

#[derive(Args, Debug)]
struct SizebiasArgs {
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args, Debug)]
struct ConfigcmpArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Total-variation threshold for the cluster-law comparison
    #[arg(long, default_value_t = 0.02)]
    tv_threshold: f64,
}

#[derive(Args, Debug)]
struct SupercritArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Supercritical conditioning fraction: the tilted law has mean 1-c
    #[arg(long, default_value_t = 0.3)]
    c: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => with_threads(&a.common, || commands::simulate(a)),
        Command::VerifyLemma1(a) => with_threads(&a.common, || commands::verify_lemma1(a)),
        Command::VerifyTheorem1(a) => with_threads(&a.common, || commands::verify_theorem1(a)),
        Command::Theorem2(a) => with_threads(&a.common, || commands::theorem2(a)),
        Command::Pairfact(a) => with_threads(&a.common, || commands::pairfact(a)),
        Command::Kemperman(a) => with_threads(&a.common, || commands::kemperman(a)),
        Command::Dwass(a) => with_threads(&a.common, || commands::dwass(a)),
        Command::Ratio(a) => with_threads(&a.common, || commands::ratio(a)),
        Command::Tilt(a) => with_threads(&a.common, || commands::tilt(a)),
        Command::Sizebias(a) => with_threads(&a.common, || commands::sizebias(a)),
        Command::Configcmp(a) => with_threads(&a.common, || commands::configcmp(a)),
        Command::Supercrit(a) => with_threads(&a.common, || commands::supercrit(a)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

/// Run a command body inside a rayon pool honoring `--threads`;
/// `--threads 1` forces fully serial execution.
fn with_threads<F: FnOnce() -> Result<bool> + Send>(common: &CommonOpts, body: F) -> Result<bool> {
    let threads = common.resolve()?.threads;
    if threads == 0 {
        return body();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("cannot build thread pool")?;
    pool.install(body)
}
