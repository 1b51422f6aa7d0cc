//! `mlmc`: constants, optimal plans, estimates and bound validation from a TOML experiment file.
//!
//! Exit status: 0 on success, 1 when a bound check is violated, 2 on an invalid
//! config or parameter set, 3 on an I/O failure.

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::ExperimentConfig;
use run::{Artifacts, Bound, Command, RunError};

const WORKERS_ENV: &str = "MLMC_WORKERS";
const DEFAULT_OUT: &str = "mlmc-out";

#[derive(Parser)]
#[command(name = "mlmc", version, about = "Multilevel Monte Carlo for additive-noise SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; beats MLMC_WORKERS and `workers` in the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; beats `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Evaluate every constant for the configured problem.
    Constants { config: PathBuf },
    /// Cost-optimal level and sample sizes for `target.eps`.
    Optimize { config: PathBuf },
    /// Run the estimator for the configured target.
    Estimate { config: PathBuf },
    /// Monte Carlo check of one bound.
    Validate {
        #[arg(value_enum)]
        bound: Bound,
        config: PathBuf,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: String,
    config_path: &'a Path,
    config_sha256: String,
    config: &'a ExperimentConfig,
    seed: u64,
    workers: usize,
    mlmc_version: &'static str,
    mlmc_core_version: &'static str,
    artifacts: &'a [String],
    violations: &'a [String],
    wall_time_seconds: f64,
}

fn resolve_workers(cli: Option<usize>, cfg: Option<usize>) -> Result<Option<usize>, RunError> {
    if let Some(w) = cli {
        return Ok(Some(w));
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let w = v
            .trim()
            .parse()
            .map_err(|_| RunError::Config(format!("{WORKERS_ENV}={v:?} is not a thread count")))?;
        return Ok(Some(w));
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<Vec<String>, RunError> {
    let start = Instant::now();
    let (command, path) = match cli.command {
        Sub::Constants { config } => (Command::Constants, config),
        Sub::Optimize { config } => (Command::Optimize, config),
        Sub::Estimate { config } => (Command::Estimate, config),
        Sub::Validate { bound, config } => (Command::Validate(bound), config),
    };
    let bytes = std::fs::read(&path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| RunError::Config(format!("{}: not UTF-8", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let workers = resolve_workers(cli.workers, cfg.workers)?;
    if workers == Some(0) {
        return Err(RunError::Config("workers must be at least 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool = pool.num_threads(w);
    }
    pool.build_global().map_err(|e| RunError::Io(e.to_string()))?;
    cfg.workers = Some(rayon::current_num_threads());
    let out = cli.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    cfg.out = Some(out.clone());

    let mut arts = Artifacts::new(&out)?;
    let violations = run::run(&cfg, command, &mut arts)?;
    let manifest = Manifest {
        command: command.name(),
        config_path: &path,
        config_sha256: hex::encode(Sha256::digest(&bytes)),
        config: &cfg,
        seed: cfg.seed,
        workers: rayon::current_num_threads(),
        mlmc_version: env!("CARGO_PKG_VERSION"),
        mlmc_core_version: mlmc_core::VERSION,
        artifacts: &arts.written.clone(),
        violations: &violations,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    arts.json("manifest.json", &manifest)?;
    Ok(violations)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(v) if v.is_empty() => ExitCode::SUCCESS,
        Ok(v) => {
            eprintln!("bound violated beyond 3 standard errors: {}", v.join(", "));
            ExitCode::from(1)
        }
        Err(RunError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::from(3)
        }
    }
}
