//! Resonance scan over parameter grids.

use std::io::Write;

use rayon::prelude::*;
use serde::Deserialize;

use crate::dynamics::{IntegratorConfig, S_MIN};
use crate::error::{Error, Result};
use crate::floquet::{analyze, Stability};
use crate::format::sig17;
use crate::potential::PotentialModel;
use crate::thermal::{build_setup, Beta, DEFAULT_GAP_TOL};

pub const DEFAULT_CAP: usize = 100_000;

/// Records with `det_error` or `symmetry_error` at or above this are marked
/// failed.
pub const STRUCTURE_LIMIT: f64 = 1e-6;

/// A potential given either as text (`"1:0.5,2:0.25"`) or as a list of
/// `{exponent, coefficient}` terms.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Text(String),
    Terms(PotentialModel),
}

impl CoefficientSpec {
    fn model(&self) -> Result<PotentialModel> {
        match self {
            CoefficientSpec::Text(s) => s.parse(),
            CoefficientSpec::Terms(m) => Ok(m.clone()),
        }
    }
}

/// Axes of a scan. Either `w` and `lambda` (the quartic family) or
/// `coefficients` must be given, together with `beta` and `s`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub w: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub coefficients: Vec<CoefficientSpec>,
    pub beta: Vec<Beta>,
    pub s: Vec<f64>,
    #[serde(default)]
    pub config: Option<IntegratorConfig>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

/// Potential of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum PointPotential {
    Quartic { w: f64, lambda: f64 },
    Generic(PotentialModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub potential: PointPotential,
    pub beta: Beta,
    pub s: f64,
}

/// Diagnostics of a successfully analysed grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDiagnostics {
    pub x0: f64,
    pub x_f: f64,
    pub period: f64,
    pub trace: f64,
    pub max_abs_multiplier_deviation: f64,
    pub classification: Stability,
    pub det_error: f64,
    pub symmetry_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub point: GridPoint,
    /// `Err` holds the failure message for this point.
    pub outcome: std::result::Result<PointDiagnostics, String>,
}

impl GridSpec {
    /// The 192-point standard grid.
    pub fn standard() -> Self {
        Self {
            w: vec![0.5, 1.0, 2.0],
            lambda: vec![0.0, 0.1, 1.0, 10.0],
            coefficients: Vec::new(),
            beta: [0.25, 0.5, 1.0, 2.0].iter().map(|&b| Beta::new(b).expect("positive")).collect(),
            s: vec![0.01, 0.1, 1.0, 10.0],
            config: None,
            cap: DEFAULT_CAP,
        }
    }

    pub fn is_generic(&self) -> bool {
        !self.coefficients.is_empty()
    }

    pub fn len(&self) -> usize {
        let potentials = if self.is_generic() {
            self.coefficients.len()
        } else {
            self.w.len().saturating_mul(self.lambda.len())
        };
        potentials.saturating_mul(self.beta.len()).saturating_mul(self.s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn config(&self) -> IntegratorConfig {
        self.config.unwrap_or_default()
    }

    /// Validates the grid and expands it in row-major order (last axis
    /// fastest).
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let quartic = !self.w.is_empty() || !self.lambda.is_empty();
        match (quartic, self.is_generic()) {
            (true, true) => {
                return Err(Error::InvalidGrid(
                    "give either w/lambda axes or coefficients, not both".into(),
                ))
            }
            (false, false) => {
                return Err(Error::InvalidGrid("no potential axis given".into()));
            }
            (true, false) if self.w.is_empty() || self.lambda.is_empty() => {
                return Err(Error::InvalidGrid("w and lambda axes must both be non-empty".into()));
            }
            _ => {}
        }
        if self.beta.is_empty() || self.s.is_empty() {
            return Err(Error::InvalidGrid("beta and s axes must be non-empty".into()));
        }
        if self.len() > self.cap {
            return Err(Error::GridTooLarge { points: self.len(), cap: self.cap });
        }
        if let Some(&s) = self.s.iter().find(|&&s| !(s > S_MIN && s.is_finite())) {
            return Err(Error::InvalidGrid(format!("s = {s} is not above the static threshold {S_MIN}")));
        }
        if let Some(v) = self.w.iter().chain(&self.lambda).find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite axis value {v}")));
        }
        self.config().validate()?;

        let potentials: Vec<PointPotential> = if self.is_generic() {
            self.coefficients
                .iter()
                .map(|c| c.model().map(PointPotential::Generic))
                .collect::<Result<_>>()?
        } else {
            self.w
                .iter()
                .flat_map(|&w| self.lambda.iter().map(move |&lambda| PointPotential::Quartic { w, lambda }))
                .collect()
        };
        let mut points = Vec::with_capacity(self.len());
        for potential in &potentials {
            for &beta in &self.beta {
                for &s in &self.s {
                    points.push(GridPoint { potential: potential.clone(), beta, s });
                }
            }
        }
        Ok(points)
    }
}

impl PointPotential {
    pub fn model(&self) -> Result<PotentialModel> {
        match self {
            PointPotential::Quartic { w, lambda } => PotentialModel::quartic(*w, *lambda),
            PointPotential::Generic(m) => Ok(m.clone()),
        }
    }
}

/// Gap equation, events period and monodromy for one point.
pub fn evaluate_point(point: &GridPoint, config: &IntegratorConfig) -> Result<PointDiagnostics> {
    let model = point.potential.model()?;
    let setup = build_setup(&model, point.beta, point.s, DEFAULT_GAP_TOL)?;
    let report = analyze(&setup, &model, config)?;
    if !(report.symmetry_error < STRUCTURE_LIMIT) {
        return Err(Error::InvalidMatrix(format!(
            "|m11 - m22| = {:e} is not below {STRUCTURE_LIMIT:e}",
            report.symmetry_error
        )));
    }
    Ok(PointDiagnostics {
        x0: setup.x0,
        x_f: report.x_f,
        period: report.period,
        trace: report.trace,
        max_abs_multiplier_deviation: report.max_abs_multiplier_deviation(),
        classification: report.classification,
        det_error: report.det_error,
        symmetry_error: report.symmetry_error,
    })
}

/// Evaluates every grid point, concurrently on `jobs` threads (the rayon
/// default when `None`). Records come back in row-major grid order and
/// failures are kept per point.
pub fn run_scan(grid: &GridSpec, jobs: Option<usize>) -> Result<Vec<ScanRecord>> {
    let points = grid.points()?;
    let config = grid.config();
    let work = || -> Vec<ScanRecord> {
        points
            .par_iter()
            .map(|p| ScanRecord {
                point: p.clone(),
                outcome: evaluate_point(p, &config).map_err(|e| e.to_string()),
            })
            .collect()
    };
    match jobs {
        None => Ok(work()),
        Some(0) => Err(Error::InvalidGrid("jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

/// True iff there are records, none failed or resonant, and every
/// multiplier stays within `tol` of the unit circle.
pub fn assert_no_resonance(records: &[ScanRecord], tol: f64) -> bool {
    !records.is_empty()
        && records.iter().all(|r| match &r.outcome {
            Ok(d) => {
                d.classification != Stability::Resonant && d.max_abs_multiplier_deviation < tol
            }
            Err(_) => false,
        })
}

/// Writes the scan as CSV. Generic-coefficient grids get a quoted
/// `coefficients` column in place of `w,lambda`. Failed points carry
/// `error` as classification and `NaN` diagnostics.
pub fn write_csv(records: &[ScanRecord], mut out: impl Write) -> std::io::Result<()> {
    let generic = records.first().is_some_and(|r| matches!(r.point.potential, PointPotential::Generic(_)));
    let lead = if generic { "coefficients" } else { "w,lambda" };
    writeln!(
        out,
        "{lead},beta,s,x0,x_f,period,trace,max_abs_multiplier_deviation,classification,det_error,symmetry_error"
    )?;
    for r in records {
        let lead = match &r.point.potential {
            PointPotential::Quartic { w, lambda } => format!("{},{}", sig17(*w), sig17(*lambda)),
            PointPotential::Generic(m) => format!("\"{m}\""),
        };
        let beta = if r.point.beta.is_ground_state() { "inf".to_string() } else { sig17(r.point.beta.value()) };
        let tail = match &r.outcome {
            Ok(d) => format!(
                "{},{},{},{},{},{},{},{}",
                sig17(d.x0),
                sig17(d.x_f),
                sig17(d.period),
                sig17(d.trace),
                sig17(d.max_abs_multiplier_deviation),
                d.classification,
                sig17(d.det_error),
                sig17(d.symmetry_error)
            ),
            Err(_) => "NaN,NaN,NaN,NaN,NaN,error,NaN,NaN".to_string(),
        };
        writeln!(out, "{lead},{beta},{},{tail}", sig17(r.point.s))?;
    }
    Ok(())
}
