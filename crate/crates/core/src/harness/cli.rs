//! Argument parsing and exit codes for the `subpath` binary.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::experiments::{run, Experiment, Report};
use super::runner::resolve_threads;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "subpath", version, about = "Quasi-invariance and integration by parts for subordinated Brownian motion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the Laplace exponent (closed form and quadrature).
    Phi(Common),
    /// Estimate the lower index σ₀ two ways.
    Index(Common),
    /// Decide finiteness of the p-th jump moment above 1.
    HpCheck(Common),
    /// Empirical survival function of S_T against its upper bound.
    Tail(Common),
    /// Joint path simulation; checks E[Z] = 1.
    Simulate(Common),
    /// Quasi-invariance: E[F(W + h)] = E[F(W) Z].
    VerifyQi(Common),
    /// Integration by parts: E[G D_h F] = E[F D_h* G].
    VerifyIbp(Common),
    /// E⟨g, h⟩_{H^(κ)} as a time integral of the weighted survival.
    VerifyIdentity(Common),
    /// Energy E‖∇F‖² of a cylinder function.
    Energy(Common),
    /// The two-index separating shift.
    Ggvv(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of replicas.
    #[arg(long)]
    pub n: Option<usize>,
    /// Where to write the JSON report (also printed to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the experiment's CSV dump.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Worker threads (capped by SUBPATH_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    pub fn split(&self) -> (Experiment, &Common) {
        match self {
            Command::Phi(c) => (Experiment::Phi, c),
            Command::Index(c) => (Experiment::Index, c),
            Command::HpCheck(c) => (Experiment::HpCheck, c),
            Command::Tail(c) => (Experiment::Tail, c),
            Command::Simulate(c) => (Experiment::Simulate, c),
            Command::VerifyQi(c) => (Experiment::VerifyQi, c),
            Command::VerifyIbp(c) => (Experiment::VerifyIbp, c),
            Command::VerifyIdentity(c) => (Experiment::VerifyIdentity, c),
            Command::Energy(c) => (Experiment::Energy, c),
            Command::Ggvv(c) => (Experiment::Ggvv, c),
        }
    }
}

/// Loads the config and applies command-line overrides.
pub fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(n) = c.n {
        cfg.n = n;
    }
    if c.out.is_some() {
        cfg.out.clone_from(&c.out);
    }
    if c.csv.is_some() {
        cfg.csv.clone_from(&c.csv);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<Report> {
    let (exp, common) = cli.command.split();
    let cfg = load_config(common)?;
    let report = run(exp, &cfg, resolve_threads(common.threads))?;
    let text = report.to_json()?;
    if let Some(path) = &cfg.out {
        std::fs::write(path, &text)?;
    }
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(report)
}

/// 0 when the experiment passes, 2 when it runs but fails its check,
/// 1 on any error.
pub fn main_with(cli: Cli) -> ExitCode {
    match execute(&cli) {
        Ok(r) if r.pass => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
