//! `snapcube`: simulate, reconstruct, decode and characterize snapshot
//! interferometric measurements from TOML run configurations.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{characterize, dataset, decode, oracle, reconstruct, simulate};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "snapcube",
    version,
    about = "Snapshot interferometric 3D imaging: simulation and ADMM-TV-wavelet reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a phantom through the interferometer, aperture and camera.
    Simulate(simulate::SimulateArgs),
    /// Recover the spectral cube from a simulated measurement.
    Reconstruct(reconstruct::ReconstructArgs),
    /// Turn a spectral cube into a depth volume and image stack.
    Decode(decode::DecodeArgs),
    /// Compute quality metrics for one or more reconstructions.
    Characterize(characterize::CharacterizeArgs),
    /// Check the sensing operator against dense constructions.
    Oracle(oracle::OracleArgs),
    /// Generate paired inputs and targets for learned reconstruction.
    Dataset(dataset::DatasetArgs),
}

/// `SNAPCUBE_THREADS` sizes the worker pool; unset means one per core.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("SNAPCUBE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("SNAPCUBE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Reconstruct(a) => reconstruct::run(a),
        Command::Decode(a) => decode::run(a),
        Command::Characterize(a) => characterize::run(a),
        Command::Oracle(a) => oracle::run(a),
        Command::Dataset(a) => dataset::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Config(e.kind().to_string());
            eprintln!("{}", err.error_line());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.error_line());
            ExitCode::from(e.exit_code())
        }
    }
}
