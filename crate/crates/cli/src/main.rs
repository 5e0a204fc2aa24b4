use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmlab_core::experiment::{run, Config, ExperimentConfig, ExperimentKind};
use mmlab_core::Error;

/// Reproducible experiments for the bilaplacian membrane model.
#[derive(Debug, Parser)]
#[command(name = "mmlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; overrides `workers` in the configuration.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// CSV destination; metadata goes to `PATH.meta`. Defaults to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Compare Green's function quadrature with the path-sum oracle.
    Green,
    /// Check sampler covariances against their exact values.
    Sample,
    /// Coupled crossing-probability sweep over levels.
    Sweep,
    /// Monte Carlo decoupling experiment.
    Decoupling,
    /// Renormalisation certificate.
    Certify,
    /// High-dimensional covariance decomposition.
    Decompose,
    /// Slab crossing experiment.
    Slab,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Green => ExperimentKind::GreenValidate,
            Command::Sample => ExperimentKind::SampleValidate,
            Command::Sweep => ExperimentKind::Sweep,
            Command::Decoupling => ExperimentKind::Decoupling,
            Command::Certify => ExperimentKind::Certify,
            Command::Decompose => ExperimentKind::Decompose,
            Command::Slab => ExperimentKind::Slab,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Precondition(_) | Error::Format(_) => 2,
        Error::Numeric { .. } | Error::Accuracy { .. } => 3,
        Error::Resource(_) | Error::Io(_) => 4,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Resource(format!("cannot write {}: {e}", path.display())))
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let config = match &cli.common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let cfg = ExperimentConfig::new(cli.command.kind(), config, cli.common.seed, cli.common.workers)?;
    let out = run(&cfg)?;
    match &cli.common.out {
        Some(p) => {
            write_file(p, &out.csv)?;
            let mut meta = p.clone().into_os_string();
            meta.push(".meta");
            write_file(Path::new(&meta), &out.meta)?;
        }
        None => print!("{}", out.csv),
    }
    eprint!("{}", out.summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
