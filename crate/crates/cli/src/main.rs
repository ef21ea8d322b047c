//! `folnerlab`: runs certification, realization and averaging experiments
//! from a JSON config and writes CSV tables plus a manifest.
//!
//! Exit status: 0 when the run's check passes, 2 when it fails (the output
//! directory then holds the witness), 1 on usage or I/O errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::commands::Status;
use crate::config::ExperimentConfig;
use crate::output::{sha256_hex, Run};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("output: {0}")]
    Output(String),
    #[error("{0}")]
    Compute(String),
}

#[derive(Parser, Debug)]
#[command(name = "folnerlab", version, about = "Almost-additive set maps on ℤ^d: certification, realization and ergodic averages")]
struct Cli {
    /// JSON experiment config; command-line flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every sampled computation (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to FOLNERLAB_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: folnerlab-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct MapArgs {
    /// Gallery name or `birkhoff:const=<c>`.
    #[arg(long)]
    map: Option<String>,
    /// zero | const=<c> | sqrt=<c> | counterexample | counterexample-doubled | gallery | derived
    #[arg(long)]
    error: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check almost additivity (and optionally Riesz almost additivity) over boxes and generated partitions.
    Certify {
        #[command(flatten)]
        map: MapArgs,
        /// zero | spike=<c> | lift | budgeted | l1budget=<B>
        #[arg(long)]
        riesz_error: Option<String>,
        /// Largest box side.
        #[arg(long)]
        max_side: Option<usize>,
    },
    /// Extract an ε₀-realization and test it on a window battery.
    Realize {
        #[command(flatten)]
        map: MapArgs,
        /// ε₀.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        m_cap: Option<usize>,
    },
    /// Estimate f_n/n for a 2×2 matrix cocycle along a schedule.
    Lyapunov {
        /// Comma-separated n values.
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<usize>>,
    },
    /// Build the additive approximant of an almost-additive sequence and test its bound.
    Erdos {
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Pointwise ergodic averages of a cylinder function over seeded trials.
    Converge {
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated n values.
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<usize>>,
    },
    /// List the named example maps with their constants.
    Gallery,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Certify { .. } => "certify",
            Command::Realize { .. } => "realize",
            Command::Lyapunov { .. } => "lyapunov",
            Command::Erdos { .. } => "erdos",
            Command::Converge { .. } => "converge",
            Command::Gallery => "gallery",
        }
    }

    /// Folds the subcommand's flags into the config.
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let set_map = |cfg: &mut ExperimentConfig, m: &MapArgs| {
            if let Some(x) = &m.map {
                cfg.map = Some(x.clone());
            }
            if let Some(x) = &m.error {
                cfg.error = Some(x.clone());
            }
        };
        match self {
            Command::Certify { map, riesz_error, max_side } => {
                set_map(cfg, map);
                if let Some(x) = riesz_error {
                    cfg.riesz_error = Some(x.clone());
                }
                if let Some(x) = max_side {
                    cfg.certify.max_side = *x;
                }
            }
            Command::Realize { map, eps, m_cap } => {
                set_map(cfg, map);
                if eps.is_some() {
                    cfg.realize.epsilon0 = *eps;
                }
                if m_cap.is_some() {
                    cfg.realize.m_cap = *m_cap;
                }
            }
            Command::Lyapunov { schedule } => {
                if let Some(s) = schedule {
                    cfg.lyapunov.schedule = s.clone();
                }
            }
            Command::Erdos { eps } => {
                if let Some(e) = eps {
                    cfg.erdos.epsilon = *e;
                }
            }
            Command::Converge { trials, schedule } => {
                if let Some(t) = trials {
                    cfg.converge.trials = *t;
                }
                if let Some(s) = schedule {
                    cfg.converge.schedule = s.clone();
                }
            }
            Command::Gallery => {}
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("FOLNERLAB_THREADS") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("FOLNERLAB_THREADS: `{s}` is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<Status, CliError> {
    if let Some(n) = threads(cli.threads)? {
        if n == 0 {
            return Err(CliError::Usage("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => config::load(p)?,
        None => config::parse("{}").map_err(CliError::Usage)?,
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    cli.command.apply(&mut cfg);
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("folnerlab-out"));
    let hash = sha256_hex(&serde_json::to_vec(&cfg).map_err(|e| CliError::Output(e.to_string()))?);

    let started = Instant::now();
    let mut files = Run::create(&out)?;
    let name = cli.command.name();
    let status = match &cli.command {
        Command::Certify { .. } => commands::certify(&cfg, &mut files),
        Command::Realize { .. } => commands::realize(&cfg, &mut files),
        Command::Lyapunov { .. } => commands::lyapunov(&cfg, &mut files),
        Command::Erdos { .. } => commands::erdos(&cfg, &mut files),
        Command::Converge { .. } => commands::converge(&cfg, &mut files),
        Command::Gallery => commands::gallery(&cfg, &mut files),
    }?;
    files.finish(name, &hash, cfg.seed, started.elapsed().as_millis())?;
    let verdict = match status {
        Status::Pass => "pass",
        Status::Fail => "FAIL",
    };
    println!("{name}: {verdict} (output in {})", out.display());
    Ok(status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("folnerlab: {e}");
            ExitCode::from(1)
        }
    }
}
