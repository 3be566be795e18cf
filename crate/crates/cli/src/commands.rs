use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use largen_core::analysis::{beat_report, extract_envelope, DEFAULT_LATE_FRACTION};
use largen_core::dynamics::{integrate, IntegratorConfig, S_MIN};
use largen_core::floquet::{analyze, period_by_events};
use largen_core::format::sig17;
use largen_core::scan::{self, CoefficientSpec, GridSpec};
use largen_core::thermal::{
    build_setup, gap_residual, matsubara_x0, solve_gap_equation, DEFAULT_GAP_TOL,
};
use largen_core::{Beta, PerturbedSetup, PotentialModel};
use serde::Serialize;

use crate::config::{CommonArgs, FileConfig, RunConfig};
use crate::{CliError, ScanArgs};

const DEFAULT_SIMULATE_PERIODS: f64 = 10.0;
const DEFAULT_BEATS_PERIODS: f64 = 50.0;

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(e: io::Error) -> CliError {
    CliError::Io(format!("write failed: {e}"))
}

/// A closed downstream pipe (`largen simulate | head`) is not an error.
fn finish(result: io::Result<()>) -> Result<(), CliError> {
    match result {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(io_err),
    }
}

fn write_json(value: &impl Serialize, path: Option<&Path>) -> Result<(), CliError> {
    let mut out = open_out(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Io(e.to_string()))?;
    finish(writeln!(out).and_then(|_| out.flush()))
}

pub fn gap(common: &CommonArgs, oracle: Option<u64>) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(common)?;
    let x0 = solve_gap_equation(&cfg.model, cfg.beta, DEFAULT_GAP_TOL)?;
    let omega = (2.0 * cfg.model.v_prime(x0)?).sqrt();
    let residual = gap_residual(&cfg.model, cfg.beta, x0).abs();
    let mut line = format!("x0={} omega={} residual={}", sig17(x0), sig17(omega), sig17(residual));
    if let Some(n_max) = oracle.or(cfg.file.oracle) {
        if cfg.beta.is_ground_state() || n_max == 0 {
            return Err(CliError::Usage(
                "the Matsubara oracle needs a finite beta and n_max >= 1".into(),
            ));
        }
        line.push_str(&format!(" oracle_x0={}", sig17(matsubara_x0(omega, cfg.beta.value(), n_max))));
    }
    let mut out = open_out(cfg.out.as_deref())?;
    finish(writeln!(out, "{line}").and_then(|_| out.flush()))
}

/// Time unit for `--n-periods`: the x-period, or the u-period when the
/// motion is static.
fn period_unit(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    config: &IntegratorConfig,
) -> Result<f64, CliError> {
    if setup.s > S_MIN {
        Ok(period_by_events(setup, model, config)?.period)
    } else {
        Ok(2.0 * PI / setup.omega_eff)
    }
}

fn run_length(
    setup: &PerturbedSetup,
    cfg: &RunConfig,
    n_periods: Option<f64>,
    t_end: Option<f64>,
    default_periods: f64,
) -> Result<f64, CliError> {
    let file: &FileConfig = &cfg.file;
    // flags beat the file; within one source t_end and n_periods exclude each other
    let (n, t) = if n_periods.is_some() || t_end.is_some() {
        (n_periods, t_end)
    } else {
        (file.n_periods, file.t_end)
    };
    match (n, t) {
        (Some(_), Some(_)) => Err(CliError::Usage("give either n_periods or t_end, not both".into())),
        (None, Some(t)) => Ok(t),
        (n, None) => {
            let n = n.unwrap_or(default_periods);
            if !(n > 0.0 && n.is_finite()) {
                return Err(CliError::Usage(format!("n_periods must be positive, got {n}")));
            }
            Ok(n * period_unit(setup, &cfg.model, &cfg.integrator)?)
        }
    }
}

pub fn simulate(
    common: &CommonArgs,
    n_periods: Option<f64>,
    t_end: Option<f64>,
    stride: Option<f64>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(common)?;
    if stride.is_some() {
        cfg.integrator.output_stride = stride;
        cfg.integrator.validate()?;
    }
    let setup = build_setup(&cfg.model, cfg.beta, cfg.s, DEFAULT_GAP_TOL)?;
    let t_end = run_length(&setup, &cfg, n_periods, t_end, DEFAULT_SIMULATE_PERIODS)?;
    let trajectory = integrate(&setup, &cfg.model, &cfg.integrator, t_end)?;
    let mut out = open_out(cfg.out.as_deref())?;
    finish(trajectory.write_csv(&mut out).and_then(|_| out.flush()))
}

pub fn floquet(common: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(common)?;
    let setup = build_setup(&cfg.model, cfg.beta, cfg.s, DEFAULT_GAP_TOL)?;
    let report = analyze(&setup, &cfg.model, &cfg.integrator)?;
    write_json(&report, cfg.out.as_deref())
}

pub fn beats(
    common: &CommonArgs,
    n_periods: Option<f64>,
    t_end: Option<f64>,
    late_fraction: Option<f64>,
    envelope_out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(common)?;
    let late_fraction = late_fraction.or(cfg.file.late_fraction).unwrap_or(DEFAULT_LATE_FRACTION);
    let envelope_out = envelope_out.or_else(|| cfg.file.envelope_out.clone());
    let setup = build_setup(&cfg.model, cfg.beta, cfg.s, DEFAULT_GAP_TOL)?;
    let t_end = run_length(&setup, &cfg, n_periods, t_end, DEFAULT_BEATS_PERIODS)?;
    let trajectory = integrate(&setup, &cfg.model, &cfg.integrator, t_end)?;
    let envelope = extract_envelope(&trajectory)?;
    let report = beat_report(&envelope, late_fraction)?;
    if let Some(path) = envelope_out {
        let mut out = open_out(Some(&path))?;
        finish(envelope.write_csv(&mut out).and_then(|_| out.flush()))?;
    }
    write_json(&report, cfg.out.as_deref())
}

fn load_grid(args: &ScanArgs) -> Result<GridSpec, CliError> {
    let mut grid = match &args.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad grid {}: {e}", path.display())))?
        }
        None => GridSpec::standard(),
    };
    if !args.coeffs_axis.is_empty() {
        grid.coefficients = args.coeffs_axis.iter().cloned().map(CoefficientSpec::Text).collect();
        if args.w_axis.is_none() && args.lambda_axis.is_none() {
            grid.w.clear();
            grid.lambda.clear();
        }
    }
    if let Some(w) = &args.w_axis {
        grid.w = w.clone();
    }
    if let Some(l) = &args.lambda_axis {
        grid.lambda = l.clone();
    }
    if let Some(b) = &args.beta_axis {
        grid.beta = b.iter().map(|v| v.parse::<Beta>()).collect::<Result<_, _>>()?;
    }
    if let Some(s) = &args.s_axis {
        grid.s = s.clone();
    }
    if let Some(cap) = args.cap {
        grid.cap = cap;
    }
    if args.rtol.is_some() || args.atol.is_some() {
        let mut config = grid.config();
        config.rtol = args.rtol.unwrap_or(config.rtol);
        config.atol = args.atol.unwrap_or(config.atol);
        grid.config = Some(config);
    }
    Ok(grid)
}

pub fn scan(args: &ScanArgs) -> Result<(), CliError> {
    if let Some(tol) = args.assert_stable {
        if tol.is_nan() || tol <= 0.0 {
            return Err(CliError::Usage(format!("--assert-stable needs a positive tolerance, got {tol}")));
        }
    }
    let grid = load_grid(args)?;
    let records = scan::run_scan(&grid, args.jobs)?;
    let mut out = open_out(args.out.as_deref())?;
    finish(scan::write_csv(&records, &mut out).and_then(|_| out.flush()))?;
    drop(out);

    let failures: Vec<_> = records.iter().enumerate().filter(|(_, r)| r.outcome.is_err()).collect();
    for (i, r) in &failures {
        if let Err(msg) = &r.outcome {
            eprintln!("point {i} (beta={}, s={}): {msg}", r.point.beta, sig17(r.point.s));
        }
    }
    if !failures.is_empty() {
        return Err(CliError::ScanFailures(failures.len()));
    }
    if let Some(tol) = args.assert_stable {
        if !scan::assert_no_resonance(&records, tol) {
            return Err(CliError::Unstable(format!(
                "resonance found: some point is resonant or has max ||λ| - 1| >= {tol:e}"
            )));
        }
    }
    Ok(())
}
