//! Command-line front end: simulate, reconstruct, render Wigner cuts and run
//! the Bell analysis, separately or as one pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualrail::wigner::Plane;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum ExitError {
    /// Bad input: configuration, flags or parameters (exit 1).
    Validation(anyhow::Error),
    /// Input/output or numerical failure while running (exit 2).
    Runtime(anyhow::Error),
    /// Outputs were written but the reconstruction did not converge (exit 3).
    NonConvergence(String),
}

impl ExitError {
    fn code(&self) -> u8 {
        match self {
            ExitError::Validation(_) => 1,
            ExitError::Runtime(_) => 2,
            ExitError::NonConvergence(_) => 3,
        }
    }
}

impl From<dualrail::Error> for ExitError {
    fn from(e: dualrail::Error) -> Self {
        use dualrail::Error as E;
        match e {
            E::Parameter { .. } | E::Dimension { .. } | E::ThresholdTooHigh(_) | E::InsufficientData(_) => {
                ExitError::Validation(e.into())
            }
            _ => ExitError::Runtime(e.into()),
        }
    }
}

impl std::fmt::Display for ExitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExitError::Validation(e) => write!(f, "validation error: {e:#}"),
            ExitError::Runtime(e) => write!(f, "error: {e:#}"),
            ExitError::NonConvergence(msg) => write!(f, "warning: {msg}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dualrail", version, about = "Dual-rail single-photon homodyne tomography simulator")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw quadrature samples from the configured model.
    Simulate(SimulateArgs),
    /// Maximum-likelihood reconstruction of the two-mode state from samples.
    Reconstruct(ReconstructArgs),
    /// Wigner-function cross-sections of a reconstructed or model state.
    Wigner(WignerArgs),
    /// Threshold-discriminated correlation curve and amplitude fit.
    Bell(BellArgs),
    /// Run simulate, reconstruct, wigner and bell in sequence.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Pipeline configuration JSON (defaults to the symmetric experiment).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Master seed; overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of samples; overrides `run.n_samples`.
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Quadrature samples CSV (`delta_theta,x_a,x_b`).
    #[arg(long = "input", value_name = "CSV")]
    pub input: PathBuf,
    /// Pipeline configuration JSON; its model sets the detector efficiency and is used for the fidelity report.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Detector efficiency to correct for; overrides the configuration.
    #[arg(long)]
    pub eta_det: Option<f64>,
}

#[derive(Debug, Args)]
pub struct WignerArgs {
    /// State JSON written by `reconstruct`.
    #[arg(long, value_name = "JSON")]
    pub state: PathBuf,
    /// Cutting plane: xa_pa_zero, pa_pb_zero or xb_zero (repeatable; default all three).
    #[arg(long)]
    pub plane: Vec<Plane>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Lower end of both grid axes.
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub min: f64,
    /// Upper end of both grid axes.
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub max: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct BellArgs {
    /// Quadrature samples CSV.
    #[arg(long = "input", value_name = "CSV")]
    pub input: PathBuf,
    /// Pipeline configuration JSON supplying bell settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Discrimination threshold T in shot-noise units.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Comma-separated thresholds for a sweep table.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sweep: Option<Vec<f64>>,
    /// Number of phase bins.
    #[arg(long)]
    pub phase_bins: Option<usize>,
    /// Bootstrap resamples for the amplitude error (0 disables).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Master seed for the bootstrap stream.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Threshold of the headline Bell curve; overrides `bell.threshold`.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Restrict Wigner output to these planes.
    #[arg(long)]
    pub plane: Vec<Plane>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("{e}");
        return ExitCode::from(e.code());
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
        Command::Wigner(a) => commands::wigner(&a),
        Command::Bell(a) => commands::bell(&a),
        Command::Pipeline(a) => commands::pipeline(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), ExitError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(ExitError::Validation(anyhow::anyhow!("--threads must be at least 1")));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ExitError::Runtime(e.into()))?;
    Ok(())
}
