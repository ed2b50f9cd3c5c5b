//! Command-line driver for the survscale toolkit.
//!
//! Subcommands: `simulate` (synthetic cohorts), `fit` (train one paradigm),
//! `predict` (event probabilities and median times for a cohort),
//! `evaluate` (repeated-split Brier scores) and `coherence` (time-origin
//! inequality audit, with the built-in published risk equation under
//! `--wilson`).
//!
//! Exit codes are a stable scripting contract: 0 success, 2 usage or config
//! error, 3 numerical non-convergence, 4 I/O error.

mod commands;
mod manifest;
mod model_file;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum AppError {
    Config(String),
    NonConvergence(String),
    Io(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::NonConvergence(_) => 3,
            AppError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(msg) | AppError::NonConvergence(msg) | AppError::Io(msg) => {
                f.write_str(msg)
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "survscale",
    version,
    about = "Parametric survival regression across time scales"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort from a key = value config file.
    Simulate {
        /// Generator config (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Output cohort CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one paradigm/family pair to a cohort and write the model JSON.
    Fit {
        /// Cohort CSV.
        #[arg(long)]
        cohort: PathBuf,
        /// Paradigm: aft-ac, aft-na, raft or rph.
        #[arg(long)]
        paradigm: String,
        /// Family: weibull, lognormal or loglogistic.
        #[arg(long)]
        family: String,
        /// Output model JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Age transform for the aft-ac design: identity or log1p.
        #[arg(long, default_value = "identity")]
        age_transform: String,
        /// Fix the shape parameter instead of estimating it.
        #[arg(long)]
        fix_shape: Option<f64>,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-8)]
        grad_tol: f64,
    },
    /// Predict event probabilities and median times for every subject.
    Predict {
        /// Model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Cohort CSV of subjects to predict for.
        #[arg(long)]
        cohort: PathBuf,
        /// Horizon in years from entry.
        #[arg(long)]
        horizon: f64,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated-split Brier-score evaluation over paradigms and families.
    Evaluate {
        /// Cohort CSV.
        #[arg(long)]
        cohort: PathBuf,
        /// Output base path; writes <out>.csv and <out>.json.
        #[arg(long)]
        out: PathBuf,
        /// Number of random splits.
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        split_fraction: f64,
        /// Paradigms to evaluate (repeatable); default aft-ac, aft-na, raft.
        #[arg(long = "paradigm")]
        paradigms: Vec<String>,
        /// Families to evaluate (repeatable); default all three.
        #[arg(long = "family")]
        families: Vec<String>,
    },
    /// Audit the time-origin inequalities for a model over an age grid.
    Coherence {
        /// Model JSON written by `fit`.
        #[arg(long, conflicts_with = "wilson")]
        model: Option<PathBuf>,
        /// Audit the built-in published risk equation instead of a file.
        #[arg(long)]
        wilson: bool,
        /// Age grid as start:end:step (inclusive).
        #[arg(long, default_value = "30:90:1")]
        ages: String,
        /// Optional output base path; writes <out>.json and <out>.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => commands::simulate(&config, &out),
        Command::Fit {
            cohort,
            paradigm,
            family,
            out,
            age_transform,
            fix_shape,
            max_iter,
            grad_tol,
        } => commands::fit(
            &cohort,
            &paradigm,
            &family,
            &out,
            &age_transform,
            fix_shape,
            max_iter,
            grad_tol,
        ),
        Command::Predict { model, cohort, horizon, out } => {
            commands::predict(&model, &cohort, horizon, out.as_deref())
        }
        Command::Evaluate {
            cohort,
            out,
            reps,
            seed,
            split_fraction,
            paradigms,
            families,
        } => commands::evaluate(&cohort, &out, reps, seed, split_fraction, &paradigms, &families),
        Command::Coherence { model, wilson, ages, out } => {
            commands::coherence(model.as_deref(), wilson, &ages, out.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
