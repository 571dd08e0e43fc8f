//! Command-line front end for the `thermalizer` library.

mod commands;
mod config;
mod table;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Command};
use config::Config;

#[derive(Parser)]
#[command(name = "thermalizer", version, about = "Cavity field driven by a stream of two-level atoms")]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Config file of `key = value` lines; a previous result CSV also works.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the CSV here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override `trajectory.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override `trunc.dim`.
    #[arg(long, global = true)]
    dim: Option<usize>,

    /// Extra `key=value` assignments, applied last.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Steady-state photon distribution and effective temperature.
    Steady,
    /// Time evolution of the cavity from an initial state.
    Evolve,
    /// Ensemble of stochastic single-atom trajectories.
    Trajectory,
    /// Ratios of neighbouring steady-state populations.
    Ratio,
    /// First moments under coherent atoms.
    Coherent,
    /// Device coupling, flux bias and pulse schedule checks.
    Circuit,
    /// Effective temperature over a grid of one parameter.
    Sweep,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Steady => Command::Steady,
            Sub::Evolve => Command::Evolve,
            Sub::Trajectory => Command::Trajectory,
            Sub::Ratio => Command::Ratio,
            Sub::Coherent => Command::Coherent,
            Sub::Circuit => Command::Circuit,
            Sub::Sweep => Command::Sweep,
        }
    }
}

fn build_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.set("trajectory.seed", &seed.to_string())?;
    }
    if let Some(dim) = cli.dim {
        config.set("trunc.dim", &dim.to_string())?;
    }
    for assignment in &cli.set {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {assignment}: expected KEY=VALUE")))?;
        config.set(k.trim(), v.trim())?;
    }
    Ok(config)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("THERMALIZER_THREADS") else {
        return Ok(());
    };
    let threads: usize =
        value.parse().map_err(|_| CliError::Config(format!("THERMALIZER_THREADS = {value}: not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn execute(cli: &Cli) -> Result<u8, CliError> {
    configure_threads()?;
    let config = build_config(cli)?;
    let report = commands::run(cli.command.into(), &config)?;
    let csv = report.table.to_csv();
    let written = match &cli.out {
        Some(path) => std::fs::write(path, csv),
        None => std::io::stdout().lock().write_all(csv.as_bytes()),
    };
    written.map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    if report.failed_points > 0 {
        log::error!("{} sweep points failed", report.failed_points);
        return Ok(3);
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("thermalizer: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
