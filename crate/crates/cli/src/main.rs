use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

mod config;
mod manifest;
mod report;
mod stages;

use config::{Overrides, RunConfig};

/// PV yield estimation from logger fleets, gridded irradiance and an
/// installation register.
#[derive(Debug, Parser)]
#[command(name = "pvyield", version)]
struct Cli {
    /// TOML run configuration; flags and PVYIELD_* variables override it.
    #[arg(long, global = true, env = "PVYIELD_CONFIG")]
    config: Option<PathBuf>,

    /// Directory holding the input files.
    #[arg(long, global = true, env = "PVYIELD_INPUT")]
    input: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "PVYIELD_OUT")]
    out: Option<PathBuf>,

    /// Scenario ids (1-15), comma separated or repeated.
    #[arg(long, global = true, env = "PVYIELD_SCENARIO", value_delimiter = ',')]
    scenario: Option<Vec<u8>>,

    /// Restrict all stages to one calendar year.
    #[arg(long, global = true, env = "PVYIELD_YEAR")]
    year: Option<i32>,

    /// Base seed for estimation and synthetic data.
    #[arg(long, global = true, env = "PVYIELD_SEED")]
    seed: Option<u64>,

    /// Worker threads; defaults to available parallelism.
    #[arg(long, global = true, env = "PVYIELD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic fleet, register, irradiance grid and ground truth.
    Synth,
    /// Apply the daily quality checks and resolve locations.
    Clean,
    /// Aggregate quarter-hour irradiance to daily cell totals.
    Grid,
    /// Normalize, bootstrap and roll up national yields per scenario.
    Estimate,
    /// Downscale national yields to municipalities.
    Regional,
    /// Print the annual and monthly summary tables.
    Report,
    /// clean, grid, estimate, regional and report in sequence.
    RunAll,
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        input: cli.input,
        out: cli.out,
        scenarios: cli.scenario,
        year: cli.year,
        seed: cli.seed,
        threads: cli.threads,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), overrides)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure thread pool")?;
    }
    match cli.command {
        Command::Synth => stages::synth(&cfg),
        Command::Clean => stages::clean(&cfg),
        Command::Grid => stages::grid(&cfg),
        Command::Estimate => stages::estimate(&cfg),
        Command::Regional => stages::regional(&cfg),
        Command::Report => stages::report(&cfg).map(|t| print!("{t}")),
        Command::RunAll => stages::run_all(&cfg).map(|t| print!("{t}")),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
