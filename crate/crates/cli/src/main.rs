//! `vecfuse` command-line runner.
//!
//! Exit codes: 0 success, 1 numerical or I/O failure, 2 usage, configuration
//! or input-data error.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{read_config_file, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Core {
        context: &'static str,
        source: vecfuse::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core { source, .. } if source.is_numerical() => 1,
            CliError::Core { .. } => 2,
            CliError::Io { .. } => 1,
        }
    }
}

pub(crate) trait Context<T> {
    fn context(self, context: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for vecfuse::Result<T> {
    fn context(self, context: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { context, source })
    }
}

#[derive(Debug, Parser)]
#[command(name = "vecfuse", version, about = "Fit, evaluate and visualize two-modality discriminative projections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a projection model and write it to the run directory.
    Fit(RunArgs),
    /// Evaluate a fitted model with k-NN on fused projections.
    Eval(EvalArgs),
    /// Export per-sample projections as CSV.
    Visualize(ModelArgs),
    /// Fit and evaluate once per code length in a range.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV with modality X features.
    #[arg(long = "x")]
    x_path: Option<PathBuf>,
    /// CSV with modality Y features.
    #[arg(long = "y")]
    y_path: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    /// dccm or dnccm.
    #[arg(long)]
    method: Option<String>,
    /// Code length L (dccm) or iteration count Q (dnccm).
    #[arg(long, visible_alias = "L")]
    code_length: Option<String>,
    /// `auto` or a nonnegative number.
    #[arg(long)]
    ridge: Option<String>,
    /// none | per_class:K | fraction:F | index_file:PATH
    #[arg(long)]
    split: Option<String>,
    /// concat | sum | x_only | y_only
    #[arg(long)]
    fusion: Option<String>,
    /// Neighbor count for k-NN.
    #[arg(long)]
    k: Option<String>,
    /// Classify on hash codes with Hamming distance.
    #[arg(long)]
    hamming: bool,
    #[arg(long)]
    seed: Option<String>,
    /// Run directory for all outputs.
    #[arg(long = "out")]
    out_dir: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Model file; defaults to <out>/model.bin.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    inner: ModelArgs,
    /// Evaluate the leading L columns for every L in A..B (inclusive).
    #[arg(long = "l-sweep", alias = "L-sweep")]
    l_sweep: Option<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Code lengths A..B (inclusive) to fit and evaluate.
    #[arg(long = "l-range", alias = "L-range")]
    l_range: String,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut settings: BTreeMap<String, String> = match &self.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                settings.insert(k.to_string(), v);
            }
        };
        set("x_path", self.x_path.map(|p| p.display().to_string()));
        set("y_path", self.y_path.map(|p| p.display().to_string()));
        set("label_column", self.label_column);
        set("method", self.method);
        set("code_length", self.code_length);
        set("ridge", self.ridge);
        set("split", self.split);
        set("fusion", self.fusion);
        set("k", self.k);
        set("seed", self.seed);
        set("out_dir", self.out_dir.map(|p| p.display().to_string()));
        if self.hamming {
            set("hamming", Some("true".into()));
        }
        if self.force {
            set("force", Some("true".into()));
        }
        RunConfig::from_settings(&settings)
    }
}

/// Parses `A..B` (inclusive) or a single number.
pub(crate) fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<usize>, CliError> {
    let bad = || CliError::Usage(format!("range `{s}` must look like A..B with 1 <= A <= B"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (s, s),
    };
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(args) => commands::fit(&args.into_config()?),
        Command::Eval(args) => {
            let sweep = args.l_sweep.as_deref().map(parse_range).transpose()?;
            let model = args.inner.model;
            commands::eval(&args.inner.run.into_config()?, model, sweep)
        }
        Command::Visualize(args) => commands::visualize(&args.run.into_config()?, args.model),
        Command::Sweep(args) => {
            let range = parse_range(&args.l_range)?;
            commands::sweep(&args.run.into_config()?, range)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
