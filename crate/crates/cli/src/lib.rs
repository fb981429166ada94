//! Command-line pipeline: `generate` full-order snapshots, build the
//! `offline` POD bases and cross tensors, `predict` at a new viscosity,
//! `compare` the interpolation routes against truth data and `bench` the
//! online operator update.

// `!(x > y)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod matrix_file;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Barycentric,
    Itsgm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightArg {
    Lagrange,
    Idw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum InitialArg {
    /// Weighted combination of the trained initial states (no mesh data needed).
    #[default]
    Weighted,
    /// First stored snapshot of the target run (requires its truth file).
    Truth,
}

#[derive(Debug, Parser)]
#[command(name = "barom", version, about = "Barycentric parametric reduced-order model pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Study configuration (JSON); `generate` only.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Subspace interpolation route for `predict`.
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,

    #[arg(long, global = true, value_enum)]
    pub weights: Option<WeightArg>,

    /// Trained points used around the target.
    #[arg(long, global = true)]
    pub neighbors: Option<usize>,

    /// POD modes per trained basis.
    #[arg(long, global = true)]
    pub q: Option<usize>,

    /// Barycenter stopping threshold on the gradient norm.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Recorded in reports; the pipeline itself is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full-order solver for every trained and test viscosity.
    Generate,
    /// POD bases, shared mean and cross-tensor archive.
    Offline {
        /// Defaults to `<out>/manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Reduced model at a new viscosity.
    Predict {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Keep the last barycenter iterate instead of failing.
        #[arg(long)]
        allow_nonconverged: bool,
        #[arg(long, value_enum, default_value_t)]
        initial: InitialArg,
    },
    /// Mean errors of barycentric, ITSGM and truth-POD models.
    Compare {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Target viscosities (default: the test viscosities).
        #[arg(long, value_delimiter = ',')]
        nu: Vec<f64>,
    },
    /// Median timings of the online update and of direct re-projection.
    Bench {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [2000usize, 20000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 21)]
        reps: usize,
        /// Update calls per timing sample.
        #[arg(long, default_value_t = 50)]
        batch: usize,
        /// Target viscosity (default: first test viscosity).
        #[arg(long)]
        nu: Option<f64>,
    },
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cli))
}
