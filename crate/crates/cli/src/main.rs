mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "greybox", version)]
#[command(about = "Grey-box NARX identification with steady-state information")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

/// Overrides shared by `train` and `sweep`.
#[derive(clap::Args, Debug, Default)]
pub struct Overrides {
    /// Experiment config (JSON); a manifest written by a previous run also works
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Generate data for this example instead of reading files
    #[arg(long)]
    pub example: Option<String>,
    /// Seed for data generation, initial weights and the GA
    #[arg(long)]
    pub seed: Option<u64>,
    /// ols, wls, weighted_lm or ga_legacy
    #[arg(long)]
    pub algorithm: Option<String>,
    /// Output directory
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the Z_d, Z_t, Z_s and Z_v datasets of a benchmark example
    Generate {
        /// example1 or example2
        #[arg(long)]
        example: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fit one model at a single λ
    Train {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Fit one model per λ and pick models with both decision makers
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// `a,b,c` or `start:stop:count`
        #[arg(long)]
        grid: Option<String>,
    },
    /// Evaluate a saved model on a dataset
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Dynamic CSV for one-step/free-run, steady CSV for static-curve
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: EvalMode,
        /// Input grid for static-curve without data, `start:stop:count`
        #[arg(long)]
        grid: Option<String>,
        /// Fixed-point iteration budget for static-curve
        #[arg(long, default_value_t = 20_000)]
        max_iterations: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    OneStep,
    FreeRun,
    StaticCurve,
}

fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Generate { example, seed, out } => commands::generate(&example, seed, &out),
        Command::Train { overrides, lambda } => commands::train(&overrides, lambda),
        Command::Sweep { overrides, grid } => commands::sweep(&overrides, grid.as_deref()),
        Command::Eval {
            model,
            data,
            mode,
            grid,
            max_iterations,
            out,
        } => commands::eval(&commands::EvalArgs {
            model,
            data,
            mode,
            grid,
            max_iterations,
            out,
        }),
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
