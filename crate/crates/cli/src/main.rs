// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cache;
mod commands;
mod config;
mod oracle;
mod output;

use clap::{Parser, Subcommand};
use commands::{Context, Outcome};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Band structure, Bloch transform and Klein-Gordon kernel computations for
/// periodic potentials.
#[derive(Parser)]
#[command(name = "hillkg", version)]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV and JSON artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Compare against independent reference computations.
    #[arg(long, global = true)]
    oracle: bool,
    /// Seed for randomized sweeps; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Recompute the band table instead of using OUT/cache.
    #[arg(long, global = true)]
    no_cache: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Band edges and the gap-decay report.
    Bands,
    /// Candidate degenerate masses.
    Dset,
    /// Bloch transform identities on a test function.
    BlochCheck,
    /// Band-function shape and phase nondegeneracy.
    PhaseCheck,
    /// One kernel value K(t, x, y).
    Kernel {
        #[arg(long)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
    },
    /// sup |K| over the light cone for each t in the configured list.
    Decay,
    /// Random van der Corput soundness sweep.
    VdcSuite,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.unwrap_or_else(|| commands::default_out().to_path_buf());
    let ctx = Context {
        cfg,
        cache: (!cli.no_cache).then(|| out.join("cache")),
        out,
        oracle: cli.oracle,
    };
    match cli.command {
        Command::Bands => commands::bands(&ctx),
        Command::Dset => commands::dset(&ctx),
        Command::BlochCheck => commands::bloch_check(&ctx),
        Command::PhaseCheck => commands::phase_check(&ctx),
        Command::Kernel { t, x, y } => commands::kernel(&ctx, t, x, y),
        Command::Decay => commands::decay(&ctx),
        Command::VdcSuite => commands::vdc_suite(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.failures {
                    eprintln!("check failed: {f}");
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
