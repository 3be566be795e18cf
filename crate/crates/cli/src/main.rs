//! `largen`: gap equation, simulation, Floquet analysis, beats and resonance
//! scans for the large-N perturbed thermal state.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 resonance assertion failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use largen_core::Error;

use config::CommonArgs;

#[derive(Debug, Parser)]
#[command(name = "largen", version, about = "Large-N O(N) quantum mechanics: perturbed thermal state dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the thermal gap equation and print x0, omega and the residual
    Gap(GapArgs),
    /// Integrate x(t) and u(t) and write the trajectory as CSV
    Simulate(SimulateArgs),
    /// Period, monodromy matrix, multipliers and stability class as JSON
    Floquet(FloquetArgs),
    /// Envelope and beat metrics of u(t) as JSON
    Beats(BeatsArgs),
    /// Floquet diagnostics over a parameter grid as CSV
    Scan(ScanArgs),
}

#[derive(Debug, Args)]
struct GapArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also print the Matsubara-sum value of x0 truncated at this n_max
    #[arg(long)]
    oracle: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Run length in periods of x(t) (of u(t) when s = 0) [default: 10]
    #[arg(long, conflicts_with = "t_end")]
    n_periods: Option<f64>,
    /// Run length in time units
    #[arg(long)]
    t_end: Option<f64>,
    /// Sampling interval of the CSV rows [default: 1/512 of the fastest u-period]
    #[arg(long)]
    stride: Option<f64>,
}

#[derive(Debug, Args)]
struct FloquetArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct BeatsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Run length in periods of x(t) [default: 50]
    #[arg(long, conflicts_with = "t_end")]
    n_periods: Option<f64>,
    /// Run length in time units
    #[arg(long)]
    t_end: Option<f64>,
    /// Final fraction of the run used for the recurrence maximum [default: 0.2]
    #[arg(long)]
    late_fraction: Option<f64>,
    /// Also write the envelope extrema as CSV to this path
    #[arg(long)]
    envelope_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// JSON grid file with axes w, lambda (or coefficients), beta, s and optional config
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Comma-separated w values (replaces the grid file's axis)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w_axis: Option<Vec<f64>>,
    /// Comma-separated lambda values (replaces the grid file's axis)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambda_axis: Option<Vec<f64>>,
    /// A potential as k:c pairs; repeat for several (replaces w/lambda axes)
    #[arg(long, allow_hyphen_values = true)]
    coeffs_axis: Vec<String>,
    /// Comma-separated inverse temperatures, numbers or `inf`
    #[arg(long, value_delimiter = ',')]
    beta_axis: Option<Vec<String>>,
    /// Comma-separated perturbation strengths
    #[arg(long, value_delimiter = ',')]
    s_axis: Option<Vec<f64>>,
    /// Relative tolerance of the integrator (overrides the grid file)
    #[arg(long)]
    rtol: Option<f64>,
    /// Absolute tolerance of the integrator (overrides the grid file)
    #[arg(long)]
    atol: Option<f64>,
    /// Maximum number of grid points [default: 100000]
    #[arg(long)]
    cap: Option<usize>,
    /// Worker threads [default: one per core]
    #[arg(long)]
    jobs: Option<usize>,
    /// Exit with code 4 unless every point is non-resonant with max ||λ| - 1| below this
    #[arg(long)]
    assert_stable: Option<f64>,
    /// Output path [default: standard output]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Io(String),
    Unstable(String),
    ScanFailures(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) | CliError::ScanFailures(_) => 3,
            CliError::Unstable(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Unstable(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::ScanFailures(n) => write!(f, "{n} grid point(s) failed"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gap(a) => commands::gap(&a.common, a.oracle),
        Command::Simulate(a) => commands::simulate(&a.common, a.n_periods, a.t_end, a.stride),
        Command::Floquet(a) => commands::floquet(&a.common),
        Command::Beats(a) => {
            commands::beats(&a.common, a.n_periods, a.t_end, a.late_fraction, a.envelope_out)
        }
        Command::Scan(a) => commands::scan(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
