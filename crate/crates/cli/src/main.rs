// SPDX-License-Identifier: MIT OR Apache-2.0

//! `probekit` command-line front end.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 for usage,
//! configuration and input errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use probekit::probes::Grid;

#[derive(Debug, Parser)]
#[command(name = "probekit", version, about = "Linear probing toolkit for frozen features")]
pub struct Cli {
    /// Output directory for reports.
    #[arg(long, global = true, env = "PROBEKIT_OUT", default_value = "probekit_out")]
    pub out: PathBuf,

    /// JSON file whose keys supply defaults for the subcommand's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Pin every hyperparameter to the published settings.
    #[arg(long, global = true)]
    pub paper_defaults: bool,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Candidate probe ranks.
    #[arg(long, value_delimiter = ',', default_values_t = vec![3usize, 4, 5, 6, 8])]
    pub ranks: Vec<usize>,
    /// Candidate ridge strengths.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0f64, 10.0, 100.0, 1000.0])]
    pub alphas: Vec<f64>,
}

impl GridArgs {
    pub fn grid(&self, paper: bool) -> Result<Grid, probekit::Error> {
        if paper {
            let published = Grid::default();
            if self.ranks != published.ranks || self.alphas != published.alphas {
                log::warn!("--paper-defaults overrides the requested grid");
            }
            return Ok(published);
        }
        Grid::new(self.ranks.clone(), self.alphas.clone())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the probe grid on one manifest and save the best probe.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Friedman, Nemenyi and TOST equivalence over a fold table CSV.
    Compare {
        /// CSV with a `model` column followed by one column per fold.
        #[arg(long)]
        folds: PathBuf,
        #[arg(long, default_value_t = 0.03)]
        delta: f64,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
    /// Linear CKA between models and its relation to their R².
    Cka {
        /// Manifests sharing sample order (one per model).
        #[arg(long, num_args = 1..)]
        manifest: Vec<PathBuf>,
        /// Precomputed CKA matrix CSV instead of manifests.
        #[arg(long, conflicts_with = "manifest")]
        matrix: Option<PathBuf>,
        /// CSV of `model,r2` rows for the gap analysis.
        #[arg(long)]
        r2: Option<PathBuf>,
    },
    /// BCa interval for a saved probe's test-set R².
    Bootstrap {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        #[arg(long = "b", default_value_t = 10_000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-layer sweep and best-layer selection.
    Layers {
        /// One manifest per layer of the same model and dataset.
        #[arg(long, num_args = 1..)]
        manifest: Vec<PathBuf>,
        /// Precomputed `layer,<model...>` R² table instead of manifests.
        #[arg(long, conflicts_with = "manifest")]
        values: Option<PathBuf>,
        /// Restrict `--values` to one model column.
        #[arg(long, requires = "values")]
        column: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Nested cross-validation over all samples of a manifest.
    Cv {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        outer_folds: usize,
        #[arg(long, default_value_t = 5)]
        inner_folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Top-norm versus random patch ablation.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Per-head probes and attention-entropy correlations.
    Heads {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        heads: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Shuffled-target, random-feature and pixel-baseline controls.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Write a synthetic dataset and manifest.
    Synth {
        #[arg(long, value_enum, default_value_t = commands::SynthKind::Planted)]
        kind: commands::SynthKind,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        t: usize,
        #[arg(long, default_value_t = 32)]
        d: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, value_delimiter = ',')]
        signal_patches: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        target_stds: Vec<f64>,
        /// Also write uniform stand-in pixels of this width.
        #[arg(long)]
        pixels: Option<usize>,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::apply_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<commands::UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<probekit::Error>() {
        Some(err) if err.is_input_error() => 2,
        _ => 1,
    }
}
