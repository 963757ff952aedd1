//! Command-line front end: synthetic data generation, single fits and
//! multi-split comparisons against vanilla PCA.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_compare, cmd_fit, cmd_synth, CommandOutput};
pub use config::Settings;

#[derive(Debug, Parser)]
#[command(name = "mbfpca", version, about = "Fair PCA under an MMD constraint")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its manifest.
    Synth(SynthArgs),
    /// Fit on one train/test split and write loadings, report and history.
    Fit(FitArgs),
    /// Compare vanilla PCA with fair fits over several splits.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator family, 1 or 2.
    #[arg(long)]
    pub kind: u8,
    /// Dimension for family 2, one of 20, 30, ..., 100.
    #[arg(long)]
    pub p: Option<usize>,
    /// Rows per protected group for family 2.
    #[arg(long)]
    pub n_per_group: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the 0/1 protected-attribute column.
    #[arg(long)]
    pub protected: Option<String>,
    /// Name of the 0/1 outcome column used for the downstream classifier.
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training fraction of each split (default 0.7).
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Fixed kernel bandwidth instead of the median heuristic.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Flat key=value file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub splits: Option<usize>,
    /// Fairness tolerances, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,
}

impl CommonArgs {
    /// Defaults, then the config file, then flags.
    pub fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        if let Some(v) = &self.protected {
            s.protected = v.clone();
        }
        if let Some(v) = &self.outcome {
            s.outcome = Some(v.clone());
        }
        if let Some(v) = self.dim {
            s.dim = Some(v);
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.train_frac {
            s.train_frac = v;
        }
        if let Some(v) = self.sigma {
            s.sigma = Some(v);
        }
        Ok(s)
    }
}

pub fn run(cli: &Cli) -> Result<CommandOutput> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a.kind, a.p, a.n_per_group, a.seed, &a.out),
        Command::Fit(a) => {
            let mut s = a.common.settings()?;
            if let Some(tau) = a.tau {
                s.taus = vec![tau];
            }
            cmd_fit(&s, &a.common.data, &a.common.out)
        }
        Command::Compare(a) => {
            let mut s = a.common.settings()?;
            if let Some(v) = a.splits {
                s.splits = v;
            }
            if !a.tau.is_empty() {
                s.taus = a.tau.clone();
            }
            cmd_compare(&s, &a.common.data, &a.common.out)
        }
    }
}
