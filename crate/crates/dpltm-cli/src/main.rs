//! `dpltm` — fit, test, and benchmark deep partially linear transformation
//! models on right-censored survival data.

use clap::{Parser, Subcommand};
use dpltm_cli::commands::{self, GlobalOpts};
use dpltm_cli::config::RunConfig;
use dpltm_cli::error::{CliError, CliResult};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "dpltm",
    version,
    about = "Deep partially linear transformation models for right-censored survival data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML). Required by simulate, fit, and benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for benchmark replicates (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (plus ground truth) from a design.
    Simulate,
    /// Fit a model to a dataset CSV, selecting r by validation likelihood.
    Fit {
        /// Dataset CSV (columns time,status,z*,x*).
        #[arg(long)]
        data: PathBuf,
    },
    /// Estimate the information bound and report Wald tests for a model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate a fitted model: C-index and calibration always, relative
    /// error and transformation error when ground truth is available.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Truth CSV written by simulate (u_true,g0,linpred).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Replicated simulate/fit/infer/evaluate study with aggregation.
    Benchmark,
}

fn load_config(path: &Option<PathBuf>) -> CliResult<Option<(RunConfig, String)>> {
    match path {
        None => Ok(None),
        Some(p) => RunConfig::load(p).map(Some).map_err(CliError::Config),
    }
}

fn require_config(path: &Option<PathBuf>) -> CliResult<(RunConfig, String)> {
    load_config(path)?
        .ok_or_else(|| CliError::Config(anyhow::anyhow!("this subcommand needs --config PATH")))
}

fn run(cli: Cli) -> CliResult<usize> {
    let opts = GlobalOpts {
        out: cli.out.clone(),
        seed: cli.seed,
        threads: cli.threads,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Simulate => {
            let (config, text) = require_config(&cli.config)?;
            commands::cmd_simulate(&config, &text, &opts)?;
            Ok(0)
        }
        Command::Fit { data } => {
            let (config, text) = require_config(&cli.config)?;
            commands::cmd_fit(&config, &text, data, &opts)?;
            Ok(0)
        }
        Command::Infer { model, data } => {
            let loaded = load_config(&cli.config)?;
            commands::cmd_infer(
                loaded.as_ref().map(|(c, _)| c),
                loaded.as_ref().map(|(_, t)| t.as_str()),
                model,
                data,
                &opts,
            )?;
            Ok(0)
        }
        Command::Evaluate { model, data, truth } => {
            let loaded = load_config(&cli.config)?;
            commands::cmd_evaluate(
                loaded.as_ref().map(|(c, _)| c),
                loaded.as_ref().map(|(_, t)| t.as_str()),
                model,
                data,
                truth.as_deref(),
                &opts,
            )?;
            Ok(0)
        }
        Command::Benchmark => {
            let (config, text) = require_config(&cli.config)?;
            commands::cmd_benchmark(&config, &text, &opts)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => {}
        Ok(failures) => {
            eprintln!("{failures} replicate(s) failed");
            std::process::exit(4);
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
