//! Run configuration: JSON file values overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use largen_core::dynamics::IntegratorConfig;
use largen_core::{Beta, PotentialModel};
use serde::Deserialize;

use crate::CliError;

/// Flags shared by the single-point subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Potential as comma-separated k:c pairs, V(x) = Σ c·x^k (e.g. 1:0.5,2:0.25)
    #[arg(long, allow_hyphen_values = true)]
    pub coeffs: Option<String>,
    /// Quartic shorthand V(x) = w²x/2 + λx²/4: the w parameter
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<f64>,
    /// Quartic shorthand: the λ parameter (defaults to 0 when only --w is given)
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Inverse temperature, a positive number or `inf` for the ground state [default: inf]
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    /// Perturbation strength s = ξ²/N [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// Relative tolerance of the integrator [default: 1e-10]
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Absolute tolerance of the integrator [default: 1e-12]
    #[arg(long)]
    pub atol: Option<f64>,
    /// Output path [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON configuration file; flags take precedence over its values
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub coeffs: Option<String>,
    pub w: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<Beta>,
    pub s: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub max_step: Option<f64>,
    pub output_stride: Option<f64>,
    pub energy_tol: Option<f64>,
    pub n_periods: Option<f64>,
    pub t_end: Option<f64>,
    pub late_fraction: Option<f64>,
    pub oracle: Option<u64>,
    pub out: Option<PathBuf>,
    pub envelope_out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Validated single-point run parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: PotentialModel,
    pub beta: Beta,
    pub s: f64,
    pub integrator: IntegratorConfig,
    pub out: Option<PathBuf>,
    pub file: FileConfig,
}

fn potential(
    coeffs: Option<&str>,
    w: Option<f64>,
    lambda: Option<f64>,
) -> Result<Option<PotentialModel>, CliError> {
    match (coeffs, w, lambda) {
        (None, None, None) => Ok(None),
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(CliError::Usage(
            "give the potential either as --coeffs or as --w/--lambda, not both".into(),
        )),
        (Some(c), None, None) => Ok(Some(c.parse()?)),
        (None, None, Some(_)) => Err(CliError::Usage("--lambda needs --w".into())),
        (None, Some(w), lambda) => Ok(Some(PotentialModel::quartic(w, lambda.unwrap_or(0.0))?)),
    }
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        // a potential given on the command line replaces the file's one whole
        let model = match potential(args.coeffs.as_deref(), args.w, args.lambda)? {
            Some(m) => m,
            None => potential(file.coeffs.as_deref(), file.w, file.lambda)?.ok_or_else(|| {
                CliError::Usage("no potential given: use --coeffs or --w/--lambda".into())
            })?,
        };
        let beta = match &args.beta {
            Some(b) => b.parse()?,
            None => file.beta.unwrap_or(Beta::GROUND_STATE),
        };
        let s = args.s.or(file.s).unwrap_or(0.0);
        if !(s >= 0.0 && s.is_finite()) {
            return Err(CliError::Usage(format!("s must be a non-negative number, got {s}")));
        }
        let defaults = IntegratorConfig::default();
        let integrator = IntegratorConfig {
            rtol: args.rtol.or(file.rtol).unwrap_or(defaults.rtol),
            atol: args.atol.or(file.atol).unwrap_or(defaults.atol),
            max_step: file.max_step.unwrap_or(defaults.max_step),
            output_stride: file.output_stride.or(defaults.output_stride),
            energy_tol: file.energy_tol.unwrap_or(defaults.energy_tol),
        };
        integrator.validate()?;
        let out = args.out.clone().or_else(|| file.out.clone());
        Ok(Self { model, beta, s, integrator, out, file })
    }
}
