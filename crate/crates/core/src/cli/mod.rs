//! Command-line front end.
//!
//! Exit codes: 0 success, 1 check failure, 2 invalid input, 3 non-convergence.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::constitutive::StressParams;
use crate::error::Error;
pub use config::{ConfigError, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "powerlaw-periodic", version, about = "Time-periodic orbits of power-law fluids on the torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON, schema version 1).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory; overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Allow kappa = 0 with q < 11/5, where the right-hand side is not Lipschitz.
    #[arg(long, global = true)]
    pub override_degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Find a time-periodic orbit and write orbit, trajectory and manifest.
    SolvePeriodic,
    /// Measure the extinction time after the forcing shuts off.
    Extinction,
    /// Solve every cell of an (n_max, epsilon, kappa) grid; resumes finished cells.
    Sweep,
    /// Re-audit a run directory.
    Verify,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Input(String),
    Run(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Input(s) => write!(f, "{s}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => EXIT_INVALID_INPUT,
            CliError::Run(e) => match e {
                Error::StepUnderflow { .. } | Error::NonFinite(_) | Error::Breakdown(_) => EXIT_NOT_CONVERGED,
                _ => EXIT_INVALID_INPUT,
            },
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Input("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.override_degenerate {
        cfg.integrator.allow_degenerate = true;
    }
    let degenerate = |kappa: f64| StressParams::new(cfg.stress.q, kappa).is_ok_and(|p| p.is_degenerate());
    let any_degenerate = degenerate(cfg.stress.kappa)
        || cfg.sweep.as_ref().is_some_and(|s| s.kappa.iter().any(|&k| degenerate(k)));
    if any_degenerate {
        if cfg.integrator.allow_degenerate {
            log::warn!("kappa = 0 with q = {} < 11/5: running the non-Lipschitz system by override", cfg.stress.q);
        } else {
            return Err(Error::DegenerateRheology { q: cfg.stress.q }.into());
        }
    }
    Ok(cfg)
}

fn output_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Result<PathBuf, CliError> {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .ok_or_else(|| CliError::Input("no output directory: pass --out DIR or set output_dir".into()))
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    if cli.command == Command::Verify {
        let cfg = match (&cli.out, &cli.config) {
            (None, Some(_)) => Some(load_config(cli)?),
            _ => None,
        };
        return verify::verify(&output_dir(cli, cfg.as_ref())?);
    }
    let cfg = load_config(cli)?;
    let out = output_dir(cli, Some(&cfg))?;
    match cli.command {
        Command::SolvePeriodic => commands::solve_periodic(&cfg, &out),
        Command::Extinction => commands::extinction(&cfg, &out),
        Command::Sweep => commands::sweep(&cfg, &out),
        Command::Verify => unreachable!(),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID_INPUT } else { EXIT_OK };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("--workers must be at least 1");
            return EXIT_INVALID_INPUT;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return EXIT_INVALID_INPUT;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
