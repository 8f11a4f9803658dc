//! `apcw` — drive the simulation pipeline from a TOML configuration.
//!
//! Every subcommand takes `--config FILE`, optional `--set path.key=value`
//! overrides, and `--out DIR`; outputs land in the directory with a manifest.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
//! error. `APCW_THREADS` caps the worker thread count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use apcw_core::config::RunConfig;
use apcw_core::pipeline;
use apcw_core::Error;

#[derive(Parser)]
#[command(name = "apcw", version, about = "Clocked atom delivery simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the launch ensemble and integrate its trajectories
    Trajectories(RunArgs),
    /// Time-resolved transmission spectrum over the delivery window
    Spectrum(RunArgs),
    /// Synthetic detector records folded on the lattice clock
    Clockfold(RunArgs),
    /// Effective-model parameters fit per folded-time slice
    Fit(RunArgs),
    /// Two-color trap capture Monte Carlo
    Capture(RunArgs),
    /// Full chain: trajectories, spectrum, clocked fold, fits
    Pipeline(RunArgs),
}

impl Command {
    fn split(self) -> (pipeline::Subcommand, RunArgs) {
        match self {
            Command::Trajectories(a) => (pipeline::Subcommand::Trajectories, a),
            Command::Spectrum(a) => (pipeline::Subcommand::Spectrum, a),
            Command::Clockfold(a) => (pipeline::Subcommand::Clockfold, a),
            Command::Fit(a) => (pipeline::Subcommand::Fit, a),
            Command::Capture(a) => (pipeline::Subcommand::Capture, a),
            Command::Pipeline(a) => (pipeline::Subcommand::Pipeline, a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override one value, e.g. --set ensemble.pancakes=3 (repeatable)
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Output directory; defaults to `output` from the configuration
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| {
                    Error::Config(vec![format!("--set {s:?}: expected PATH=VALUE")])
                })
        })
        .collect()
}

fn init_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("APCW_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(vec![format!(
            "APCW_THREADS: expected a positive integer, got {raw:?}"
        )])
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    init_threads()?;
    let (sub, args) = cli.command.split();
    let overrides = parse_overrides(&args.set)?;
    let cfg = RunConfig::load(&args.config, &overrides)?;
    let outdir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output));
    pipeline::run(sub, &cfg, &outdir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
