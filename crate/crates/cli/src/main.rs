//! `spinflux` command-line driver.
//!
//! Exit codes: 0 success, 1 other failure, 2 config error, 3 phase error
//! (T at or below an ordering instability), 4 I/O error, 5 failed
//! validation checks.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "spinflux", version, about = "Paramagnon flux noise of disordered spin lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config; defaults are used for absent keys or without a file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding ensemble.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Temperature in |J|/k_B, overriding `temperature`.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for ensembles (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One instance with the configured engine.
    Run(Common),
    /// Temperature sweep over shared instance seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated temperatures, overriding `temperatures`.
        #[arg(long, value_delimiter = ',')]
        temperatures: Option<Vec<f64>>,
        /// Ensemble size, overriding ensemble.m.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Averaged density and noise over M instances.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Homogeneous-approximation edge model.
    Ha(Common),
    /// Infinite-plane closed forms.
    Plane(Common),
    /// Power-law fit of two columns of a CSV file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "gamma")]
        x: String,
        #[arg(long, default_value = "rho_phi")]
        y: String,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Oracle checks on the configured system; exit 5 if any fails.
    Validate(Common),
}

fn prepare(
    c: &Common,
    m: Option<usize>,
    temperatures: Option<Vec<f64>>,
) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.ensemble.master_seed = s;
    }
    if let Some(t) = c.temperature {
        cfg.temperature = t;
    }
    if let Some(m) = m {
        cfg.ensemble.m = m;
    }
    if let Some(ts) = temperatures {
        cfg.temperatures = ts;
    }
    cfg.validate()?;
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => commands::run(&prepare(&c, None, None)?, &c.out_dir),
        Command::Sweep {
            common,
            temperatures,
            m,
        } => commands::sweep(&prepare(&common, m, temperatures)?, &common.out_dir),
        Command::Ensemble { common, m } => {
            commands::ensemble(&prepare(&common, m, None)?, &common.out_dir)
        }
        Command::Ha(c) => commands::ha(&prepare(&c, None, None)?, &c.out_dir),
        Command::Plane(c) => commands::plane(&prepare(&c, None, None)?, &c.out_dir),
        Command::Fit {
            input,
            x,
            y,
            lo,
            hi,
            out_dir,
        } => commands::fit(&input, &x, &y, (lo, hi), &out_dir),
        Command::Validate(c) => commands::validate(&prepare(&c, None, None)?, &c.out_dir),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinflux: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
