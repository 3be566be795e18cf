//! Period of the condensate motion and Floquet stability of the
//! perturbation mode.
//!
//! With `x(t)` periodic, `u'' = -2V'(x(t)) u` is a Hill equation. Its
//! monodromy matrix `M` over one period has unit determinant, so the
//! multipliers solve `λ² - tr(M) λ + 1 = 0`.

use std::cell::Cell;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::dynamics::dop853::{self, OdeSystem};
use crate::dynamics::{locate_turning_events, Coupling, Flow, IntegratorConfig, S_MIN};
use crate::error::{Error, Result};
use crate::format::{json_number, serialize_sig17};
use crate::potential::PotentialModel;
use crate::quadrature::GaussLegendre;
use crate::roots::bisect;
use crate::thermal::PerturbedSetup;

/// Half-width of the band around `|tr M| = 2` classified as boundary.
pub const DEFAULT_TOL_B: f64 = 1e-9;

/// A monodromy matrix with `|det M - 1|` at or above this is rejected.
pub const DET_ERROR_LIMIT: f64 = 1e-6;

const QUADRATURE_RTOL: f64 = 1e-10;
const QUADRATURE_NODES: usize = 16;
const MAX_PANELS: usize = 1 << 14;
const ROOT_SCAN_POINTS: usize = 1024;
const EVENT_HORIZON: f64 = 1e6;
const EVENT_CONSISTENCY: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodMethod {
    Events,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodEstimate {
    #[serde(serialize_with = "serialize_sig17")]
    pub period: f64,
    pub method: PeriodMethod,
    #[serde(serialize_with = "serialize_sig17")]
    pub x_f: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub x_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Oscillatory,
    Resonant,
    Boundary,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Oscillatory => "oscillatory",
            Stability::Resonant => "resonant",
            Stability::Boundary => "boundary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Complex {
    #[serde(serialize_with = "serialize_sig17")]
    pub re: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub im: f64,
}

impl Complex {
    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonodromyResult {
    pub period: f64,
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
    pub trace: f64,
    pub det_error: f64,
    pub symmetry_error: f64,
    pub multipliers: [Complex; 2],
    pub classification: Stability,
}

impl MonodromyResult {
    /// Builds the derived quantities from the matrix entries, classifying
    /// with `tol_b`.
    pub fn from_matrix(period: f64, m: [[f64; 2]; 2], tol_b: f64) -> Result<Self> {
        let trace = m[0][0] + m[1][1];
        let mut result = Self {
            period,
            m11: m[0][0],
            m12: m[0][1],
            m21: m[1][0],
            m22: m[1][1],
            trace,
            det_error: (m[0][0] * m[1][1] - m[0][1] * m[1][0] - 1.0).abs(),
            symmetry_error: (m[0][0] - m[1][1]).abs(),
            multipliers: [Complex { re: f64::NAN, im: 0.0 }; 2],
            classification: Stability::Boundary,
        };
        result.classification = classify_stability(&result, tol_b)?;
        result.multipliers = multipliers(trace, result.classification);
        Ok(result)
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.m11, self.m12], [self.m21, self.m22]]
    }

    /// `max_i ||λ_i| - 1|`.
    pub fn max_abs_multiplier_deviation(&self) -> f64 {
        self.multipliers.iter().map(|l| (l.abs() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Classification by `|tr M|` against `2 ± tol_b`.
pub fn classify_trace(trace: f64, tol_b: f64) -> Stability {
    let a = trace.abs();
    if a < 2.0 - tol_b {
        Stability::Oscillatory
    } else if a > 2.0 + tol_b {
        Stability::Resonant
    } else {
        Stability::Boundary
    }
}

pub fn classify_stability(result: &MonodromyResult, tol_b: f64) -> Result<Stability> {
    if !(result.det_error < DET_ERROR_LIMIT) {
        return Err(Error::InvalidMatrix(format!(
            "|det M - 1| = {:e} is not below {DET_ERROR_LIMIT:e}",
            result.det_error
        )));
    }
    Ok(classify_trace(result.trace, tol_b))
}

/// Roots of `λ² - trace·λ + 1`. Inside the boundary band the pair is
/// reported as the double root `sign(trace)`, the value it takes at the band
/// centre.
pub fn multipliers(trace: f64, class: Stability) -> [Complex; 2] {
    match class {
        Stability::Oscillatory => {
            let re = 0.5 * trace;
            let im = (1.0 - re * re).sqrt();
            [Complex { re, im }, Complex { re, im: -im }]
        }
        Stability::Resonant => {
            let big = 0.5 * (trace + trace.signum() * (trace * trace - 4.0).sqrt());
            [Complex { re: big, im: 0.0 }, Complex { re: 1.0 / big, im: 0.0 }]
        }
        Stability::Boundary => {
            let r = if trace < 0.0 { -1.0 } else { 1.0 };
            [Complex { re: r, im: 0.0 }; 2]
        }
    }
}

fn require_motion(setup: &PerturbedSetup) -> Result<()> {
    if setup.s > S_MIN {
        Ok(())
    } else {
        Err(Error::Degenerate { s: setup.s, s_min: S_MIN })
    }
}

/// Inner turning point `x_f`, where `Ṽ(x_f) = Ṽ(x_init)`.
///
/// Uses `Ṽ(x) - Ṽ(x_init) = 4 (x - x_init) g(x)` with
/// `g(x) = [xV](x, x_init) - E`, which is negative at 0 and positive at
/// `x_init`. The largest sign change of `g` below `x_init` is bracketed on a
/// grid and bisected.
pub fn turning_point_root(setup: &PerturbedSetup, model: &PotentialModel) -> Result<f64> {
    require_motion(setup)?;
    let x_init = setup.x_init;
    let g = |x: f64| model.xv_divided_difference(x, x_init) - setup.e_per_dof;
    let mut hi = x_init;
    for i in 1..=ROOT_SCAN_POINTS {
        let lo = x_init * (1.0 - i as f64 / ROOT_SCAN_POINTS as f64);
        let g_lo = g(lo);
        if !g_lo.is_finite() {
            break;
        }
        if g_lo <= 0.0 {
            return bisect(g, lo, hi);
        }
        hi = lo;
    }
    Err(Error::NoConvergence(format!(
        "no inner turning point found in (0, {x_init})"
    )))
}

/// Period from the first two zero crossings of `x'`: `T = 2 t_1`, with the
/// second crossing required at `2 t_1`.
pub fn period_by_events(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    config: &IntegratorConfig,
) -> Result<PeriodEstimate> {
    let events = locate_turning_events(setup, model, config, 2, EVENT_HORIZON)?;
    let (first, second) = (events[0], events[1]);
    let period = 2.0 * first.t;
    if ((second.t - period) / period).abs() > EVENT_CONSISTENCY {
        return Err(Error::NumericalFailure(format!(
            "turning events at {} and {} are not equally spaced",
            first.t, second.t
        )));
    }
    Ok(PeriodEstimate { period, method: PeriodMethod::Events, x_f: first.x, x_max: setup.x_init })
}

/// Period as `2 ∫ dx / sqrt(2(Ṽ(x_init) - Ṽ(x)))` over `[x_f, x_init]`.
///
/// Both roots are factored out exactly:
/// `Ṽ(x_init) - Ṽ(x) = 4 (x_init - x)(x - x_f) D(x)` with `D` the second
/// divided difference of `xV` at `(x, x_f, x_init)`. After
/// `x = c - A cos θ` this leaves `T = ∫_0^π dθ / sqrt(2 D(x(θ)))`.
pub fn period_by_quadrature(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    x_f: f64,
) -> Result<PeriodEstimate> {
    let x_init = setup.x_init;
    if !(x_f > 0.0 && x_f < x_init) {
        return Err(Error::Domain(format!("need 0 < x_f < x_init, got x_f = {x_f}")));
    }
    let c = 0.5 * (x_init + x_f);
    let a = 0.5 * (x_init - x_f);
    let bad = Cell::new(None);
    let integrand = |theta: f64| {
        let x = c - a * theta.cos();
        let d = model.xv_second_divided_difference(x, x_f, x_init);
        if !(d > 0.0 && d.is_finite()) {
            bad.set(bad.get().or(Some(x)));
            return 0.0;
        }
        1.0 / (2.0 * d).sqrt()
    };

    let rule = GaussLegendre::new(QUADRATURE_NODES);
    let mut panels = 1;
    let mut previous = rule.integrate_composite(integrand, 0.0, std::f64::consts::PI, panels);
    loop {
        if let Some(x) = bad.get() {
            return Err(Error::NonSimpleTurningPoint(format!(
                "well curvature vanishes near x = {x} on [{x_f}, {x_init}]"
            )));
        }
        if panels >= MAX_PANELS {
            return Err(Error::NoConvergence(format!(
                "period quadrature not converged at {panels} panels"
            )));
        }
        panels *= 2;
        let current = rule.integrate_composite(integrand, 0.0, std::f64::consts::PI, panels);
        if bad.get().is_none() && (current - previous).abs() < QUADRATURE_RTOL * current.abs() {
            return Ok(PeriodEstimate {
                period: current,
                method: PeriodMethod::Quadrature,
                x_f,
                x_max: x_init,
            });
        }
        previous = current;
    }
}

/// The condensate (as an offset from `x_init`) plus two copies of the `u`-equation sharing one `x(t)`.
struct PairedFlow<'a>(Flow<'a>);

impl OdeSystem<6> for PairedFlow<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 6]) -> Option<[f64; 6]> {
        let (x_ddot, k) = self.0.forces(y[0])?;
        Some([y[1], x_ddot, y[3], -k * y[2], y[5], -k * y[4]])
    }

    fn magnitude(&self, i: usize, y: f64) -> f64 {
        self.0.component_magnitude(i, y)
    }
}

/// Monodromy matrix of the `u`-equation over `[0, period]`, with both basis
/// solutions integrated in one pass.
pub fn monodromy_matrix(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    config: &IntegratorConfig,
    period: f64,
) -> Result<MonodromyResult> {
    config.validate()?;
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::Domain(format!("period must be positive, got {period}")));
    }
    let flow = PairedFlow(Flow::new(setup, model, Coupling::Dynamic));
    let y0 = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let (y, _) = dop853::propagate(&flow, 0.0, y0, period, config.tolerances())?;
    MonodromyResult::from_matrix(period, [[y[2], y[4]], [y[3], y[5]]], DEFAULT_TOL_B)
}

/// Full Floquet analysis of one setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetReport {
    pub period: f64,
    pub x_f: f64,
    pub monodromy: [[f64; 2]; 2],
    pub trace: f64,
    pub det_error: f64,
    pub symmetry_error: f64,
    pub multipliers: [Complex; 2],
    pub classification: Stability,
}

impl FloquetReport {
    pub fn new(x_f: f64, m: &MonodromyResult) -> Self {
        Self {
            period: m.period,
            x_f,
            monodromy: m.matrix(),
            trace: m.trace,
            det_error: m.det_error,
            symmetry_error: m.symmetry_error,
            multipliers: m.multipliers,
            classification: m.classification,
        }
    }

    pub fn max_abs_multiplier_deviation(&self) -> f64 {
        self.multipliers.iter().map(|l| (l.abs() - 1.0).abs()).fold(0.0, f64::max)
    }
}

impl Serialize for FloquetReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let matrix: Vec<Vec<_>> =
            self.monodromy.iter().map(|row| row.iter().map(|&v| json_number(v)).collect()).collect();
        let mut st = s.serialize_struct("FloquetReport", 8)?;
        st.serialize_field("period", &json_number(self.period))?;
        st.serialize_field("x_f", &json_number(self.x_f))?;
        st.serialize_field("monodromy", &matrix)?;
        st.serialize_field("trace", &json_number(self.trace))?;
        st.serialize_field("det_error", &json_number(self.det_error))?;
        st.serialize_field("symmetry_error", &json_number(self.symmetry_error))?;
        st.serialize_field("multipliers", &self.multipliers)?;
        st.serialize_field("classification", &self.classification)?;
        st.end()
    }
}

/// Period from events, turning point from the root finder, then the
/// monodromy over exactly that period.
pub fn analyze(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    config: &IntegratorConfig,
) -> Result<FloquetReport> {
    let estimate = period_by_events(setup, model, config)?;
    let x_f = turning_point_root(setup, model)?;
    let m = monodromy_matrix(setup, model, config, estimate.period)?;
    Ok(FloquetReport::new(x_f, &m))
}
