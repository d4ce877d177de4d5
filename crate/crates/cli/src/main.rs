//! `parity-sme` command-line driver.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clap::error::ErrorKind;

/// Usage error.
pub const EXIT_USAGE: u8 = 64;
/// Invalid configuration or parameters.
pub const EXIT_VALIDATION: u8 = 1;
/// Numerical-quality breach.
pub const EXIT_QUALITY: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "parity-sme", version, about = "Multi-qubit parity readout simulator")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// System configuration JSON, or a manifest of an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Base seed of the random streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Integration steps over the record.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Pulse JSON replacing the configured pulse.
    #[arg(long, global = true)]
    pub pulse: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detunings that make the readout parity-only.
    Design {
        #[arg(long)]
        kappa0: Option<f64>,
        #[arg(long)]
        kappa1: Option<f64>,
        #[arg(long)]
        chi: Option<f64>,
    },
    /// Samples the drive envelope.
    PulsePreview,
    /// Pointer amplitudes and output fields of every bitstring.
    Respond,
    /// One conditioned trajectory from |+…+⟩.
    Trajectory {
        /// Stream index within the seed.
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// Comma-separated snapshot times.
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<f64>,
        /// Widen the positivity floor to dt^1.5.
        #[arg(long)]
        coarse: bool,
    },
    /// Trajectory ensemble with integrated-signal statistics.
    Ensemble {
        #[arg(long, default_value_t = 500)]
        trajectories: usize,
        /// Comma-separated filters: matched, uniform.
        #[arg(long, value_delimiter = ',', default_value = "matched,uniform")]
        filter: Vec<String>,
        /// Filters normalized to mean one instead of unit integral.
        #[arg(long)]
        mean_one: bool,
        /// Widen the positivity floor to dt^1.5.
        #[arg(long)]
        coarse: bool,
    },
    /// Trace distance between the parity eigenstates under the pulse.
    Witness,
    /// Gate fidelity against error rate.
    GateModel {
        /// Solve for the error rate giving this fidelity.
        #[arg(long)]
        fidelity: Vec<f64>,
    },
    /// Checks the configuration.
    Validate,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
