use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use pmi_curation::PmiPath;

mod commands;
mod config;
mod output;

use commands::RunContext;
use config::RunConfig;
use output::OutDir;

/// Scores training data by its pointwise mutual information with a test set.
#[derive(Debug, Parser)]
#[command(name = "pmi-curation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank correlation of estimates against benchmark levels with known mutual information.
    Benchmark(Flags),
    /// Change in PMI and test accuracy for each curation method.
    Curate(Flags),
    /// Mean PMI over pairs of EMB1 files.
    Estimate(Flags),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PathFlag {
    Gaussian,
    Eta,
    Mc,
}

impl From<PathFlag> for PmiPath {
    fn from(p: PathFlag) -> Self {
        match p {
            PathFlag::Gaussian => PmiPath::GaussianClosedForm,
            PathFlag::Eta => PmiPath::EtaPoint,
            PathFlag::Mc => PmiPath::MonteCarlo,
        }
    }
}

#[derive(Debug, clap::Args)]
struct Flags {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "pmi-out")]
    out: PathBuf,
    /// Comma-separated prior variances; overrides the config.
    #[arg(long, value_delimiter = ',')]
    c_values: Option<Vec<f64>>,
    /// PMI route; overrides the config.
    #[arg(long, value_enum)]
    path: Option<PathFlag>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

/// A failed run, split by exit status.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn validation(msg: &str) -> Self {
        Failure::Validation(anyhow!(msg.to_string()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn load_config(flags: &Flags) -> Result<(RunConfig, PathBuf), Failure> {
    let text = std::fs::read_to_string(&flags.config)
        .with_context(|| format!("cannot read config file {}", flags.config.display()))
        .map_err(Failure::Validation)?;
    let mut config = RunConfig::parse(&text).with_context(|| format!("invalid config {}", flags.config.display())).map_err(Failure::Validation)?;
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    if let Some(c) = &flags.c_values {
        config.c_values = c.clone();
    }
    if let Some(p) = flags.path {
        config.pmi.path = p.into();
    }
    config.validate().map_err(|m| Failure::Validation(anyhow!(m)))?;
    let base = flags.config.parent().map(Path::to_path_buf).unwrap_or_default();
    for f in config.input_files() {
        let full = config::resolve(&base, f);
        if !full.is_file() {
            return Err(Failure::Validation(anyhow!("input file not found: {}", full.display())));
        }
    }
    Ok((config, base))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (Command::Benchmark(flags) | Command::Curate(flags) | Command::Estimate(flags)) = &cli.command;
    let (config, base) = load_config(flags)?;
    let out = OutDir::create(&flags.out).map_err(Failure::Runtime)?;
    let ctx = RunContext { config: &config, base: &base, out: &out };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = flags.workers {
        if n == 0 {
            return Err(Failure::validation("--workers must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Runtime(e.into()))?;
    pool.install(|| match &cli.command {
        Command::Benchmark(_) => commands::benchmark(&ctx),
        Command::Curate(_) => commands::curate(&ctx),
        Command::Estimate(_) => commands::estimate(&ctx),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Validation(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.exit_code())
        }
    }
}
