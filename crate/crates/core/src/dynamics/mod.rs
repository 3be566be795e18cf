//! Coupled evolution of the condensate `x(t)` and the normalized perturbation
//! amplitude `u(t)`:
//!
//! ```text
//! x'' = -dṼ/dx,    u'' = -2 V'(x) u,
//! x(0) = x_init, x'(0) = 0, u(0) = 1, u'(0) = 0.
//! ```

pub mod dop853;
mod tableau;

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{serialize_sig17, sig17};
use crate::potential::PotentialModel;
use crate::roots::bisect;
use crate::thermal::PerturbedSetup;
use dop853::{Dop853, OdeSystem, StepStats, Tolerances};

/// Perturbation strengths at or below this are treated as static motion.
pub const S_MIN: f64 = 1e-12;

/// Default number of samples per fastest `u`-oscillation.
const SAMPLES_PER_U_PERIOD: f64 = 512.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct State {
    #[serde(serialize_with = "serialize_sig17")]
    pub t: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub x: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub x_dot: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub u: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub u_dot: f64,
}

impl State {
    pub fn initial(setup: &PerturbedSetup) -> Self {
        Self { t: 0.0, x: setup.x_init, x_dot: 0.0, u: 1.0, u_dot: 0.0 }
    }

}

/// Time derivative of a [`State`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub x_dot: f64,
    pub x_ddot: f64,
    pub u_dot: f64,
    pub u_ddot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Sampling interval of emitted samples. `None` picks 1/512 of the
    /// shortest `u`-oscillation period.
    pub output_stride: Option<f64>,
    /// Bound on the relative drift of `energy_x` over a trajectory.
    pub energy_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_step: f64::INFINITY, output_stride: None, energy_tol: 1e-8 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rtol", self.rtol)?;
        positive("atol", self.atol)?;
        positive("max_step", self.max_step)?;
        positive("energy_tol", self.energy_tol)?;
        if let Some(stride) = self.output_stride {
            if !(stride > 0.0 && stride.is_finite()) {
                return Err(Error::Domain(format!("output_stride must be positive, got {stride}")));
            }
        }
        Ok(())
    }

    pub(crate) fn tolerances(&self) -> Tolerances {
        Tolerances { rtol: self.rtol, atol: self.atol, max_step: self.max_step }
    }

    /// Stride actually used for `setup`.
    pub fn stride_for(&self, setup: &PerturbedSetup, model: &PotentialModel) -> f64 {
        self.output_stride
            .unwrap_or_else(|| fastest_u_period(setup, model) / SAMPLES_PER_U_PERIOD)
    }
}

/// Shortest period of the `u`-oscillation along the motion. `V'` grows with
/// `x`, so the coefficient `2V'(x)` peaks at `x_init`.
pub fn fastest_u_period(setup: &PerturbedSetup, model: &PotentialModel) -> f64 {
    let omega_max = (2.0 * model.slope_raw(setup.x_init)).sqrt().max(setup.omega_eff);
    2.0 * PI / omega_max
}

/// How the coefficient of the `u`-equation is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// `2V'(x(t))` along the trajectory.
    #[default]
    Dynamic,
    /// Held at `2V'(x_init)`, a constant-frequency control.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    #[serde(flatten)]
    pub state: State,
    #[serde(serialize_with = "serialize_sig17")]
    pub energy_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegratorStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub evaluations: u64,
    pub max_energy_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub setup: PerturbedSetup,
    pub stats: IntegratorStats,
    /// Sampling interval the trajectory was produced with.
    pub stride: f64,
}

impl Trajectory {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,x,x_dot,u,u_dot,energy_x")?;
        for s in &self.samples {
            let st = s.state;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                sig17(st.t),
                sig17(st.x),
                sig17(st.x_dot),
                sig17(st.u),
                sig17(st.u_dot),
                sig17(s.energy_x)
            )?;
        }
        Ok(())
    }

    pub fn min_x(&self) -> f64 {
        self.samples.iter().map(|s| s.state.x).fold(f64::INFINITY, f64::min)
    }

    pub fn max_x(&self) -> f64 {
        self.samples.iter().map(|s| s.state.x).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A zero crossing of `x'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningEvent {
    pub t: f64,
    pub x: f64,
}

/// The 4-dimensional flow as an ODE system. The condensate components are
/// stored as `((x - x_init)/σ, x'/σ)` with `σ = min(s, 1)`, so that error
/// control follows the size of the motion rather than of `x` itself. Trial
/// states with `x <= 0` are outside the domain.
pub(crate) struct Flow<'a> {
    pub setup: &'a PerturbedSetup,
    pub model: &'a PotentialModel,
    pub frozen: Option<f64>,
    sigma: f64,
}

impl<'a> Flow<'a> {
    pub fn new(setup: &'a PerturbedSetup, model: &'a PotentialModel, coupling: Coupling) -> Self {
        let frozen = match coupling {
            Coupling::Dynamic => None,
            Coupling::Frozen => Some(2.0 * model.slope_raw(setup.x_init)),
        };
        let sigma = if setup.s > S_MIN { setup.s.min(1.0) } else { 1.0 };
        Self { setup, model, frozen, sigma }
    }

    pub fn encode(&self, state: &State) -> [f64; 4] {
        [(state.x - self.setup.x_init) / self.sigma, state.x_dot / self.sigma, state.u, state.u_dot]
    }

    pub fn decode(&self, t: f64, y: [f64; 4]) -> State {
        State {
            t,
            x: self.setup.x_init + self.sigma * y[0],
            x_dot: self.sigma * y[1],
            u: y[2],
            u_dot: y[3],
        }
    }

    pub fn x_of(&self, y0: f64) -> f64 {
        self.setup.x_init + self.sigma * y0
    }

    /// Relative error control on the stored offset, but never looser than
    /// control on `x` itself: near an inner turning point close to zero the
    /// offset is large while `x` is small.
    pub fn component_magnitude(&self, i: usize, y: f64) -> f64 {
        if i == 0 {
            y.abs().min(self.x_of(y).abs() / self.sigma)
        } else {
            y.abs()
        }
    }

    /// Scaled `x''` and the coefficient `2V'(x)` for the stored first
    /// component, or `None` off the domain.
    #[inline]
    pub fn forces(&self, y0: f64) -> Option<(f64, f64)> {
        let x = self.x_of(y0);
        if !(x > 0.0) {
            return None;
        }
        let x_ddot = -self.setup.effective_gradient_raw(self.model, x) / self.sigma;
        let coefficient = self.frozen.unwrap_or_else(|| 2.0 * self.model.slope_raw(x));
        Some((x_ddot, coefficient))
    }
}

impl OdeSystem<4> for Flow<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> Option<[f64; 4]> {
        let (x_ddot, k) = self.forces(y[0])?;
        Some([y[1], x_ddot, y[3], -k * y[2]])
    }

    fn magnitude(&self, i: usize, y: f64) -> f64 {
        self.component_magnitude(i, y)
    }
}

pub fn derivative(setup: &PerturbedSetup, model: &PotentialModel, state: &State) -> Result<Rates> {
    if !(state.x > 0.0) {
        return Err(Error::Domain(format!("x must be positive, got {}", state.x)));
    }
    let x_ddot = -setup.effective_gradient_raw(model, state.x);
    let u_ddot = -2.0 * model.slope_raw(state.x) * state.u;
    Ok(Rates { x_dot: state.x_dot, x_ddot, u_dot: state.u_dot, u_ddot })
}

/// `½ x'² + Ṽ(x)`, the first integral of the condensate motion.
pub fn energy_x(setup: &PerturbedSetup, model: &PotentialModel, state: &State) -> Result<f64> {
    if !(state.x > 0.0) {
        return Err(Error::Domain(format!("x must be positive, got {}", state.x)));
    }
    Ok(0.5 * state.x_dot * state.x_dot + setup.effective_potential_raw(model, state.x))
}

pub fn integrate(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    config: &IntegratorConfig,
    t_end: f64,
) -> Result<Trajectory> {
    integrate_with(setup, model, config, t_end, Coupling::Dynamic)
}

/// Integrates from the initial state to exactly `t_end`, sampling every
/// stride via dense output, and checks the energy drift.
pub fn integrate_with(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    config: &IntegratorConfig,
    t_end: f64,
    coupling: Coupling,
) -> Result<Trajectory> {
    config.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Domain(format!("t_end must be positive and finite, got {t_end}")));
    }
    let stride = config.stride_for(setup, model);
    let flow = Flow::new(setup, model, coupling);
    let start = State::initial(setup);
    let mut solver = Dop853::new(&flow, 0.0, flow.encode(&start), config.tolerances())?;

    let e0 = energy_x(setup, model, &start)?;
    let mut max_drift: f64 = 0.0;
    let mut samples = Vec::with_capacity((t_end / stride) as usize + 2);
    let mut push = |t: f64, y: [f64; 4]| -> Result<()> {
        let state = flow.decode(t, y);
        let e = energy_x(setup, model, &state).map_err(|_| {
            Error::NumericalFailure(format!("trajectory left x > 0 at t = {t}"))
        })?;
        max_drift = max_drift.max(((e - e0) / e0).abs());
        samples.push(Sample { state, energy_x: e });
        Ok(())
    };
    push(0.0, flow.encode(&start))?;

    let mut k: u64 = 1;
    while solver.t() < t_end {
        solver.step(t_end)?;
        loop {
            let t = k as f64 * stride;
            // leave room so the final sample at t_end is not crowded
            if t > solver.t() || t >= t_end * (1.0 - 1e-12) {
                break;
            }
            let y = solver.dense(t)?;
            push(t, y)?;
            k += 1;
        }
    }
    push(t_end, *solver.y())?;

    let raw = solver.stats();
    let stats = IntegratorStats {
        accepted_steps: raw.accepted,
        rejected_steps: raw.rejected,
        evaluations: raw.evaluations,
        max_energy_drift: max_drift,
    };
    if max_drift > config.energy_tol {
        return Err(Error::NumericalFailure(format!(
            "energy drift {max_drift:e} exceeds {:e}; tighten rtol/atol",
            config.energy_tol
        )));
    }
    Ok(Trajectory { samples, setup: *setup, stats, stride })
}

/// First `count` zero crossings of `x'` after `t = 0`, each refined on the
/// dense output to adjacent floating-point times.
pub fn locate_turning_events(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    config: &IntegratorConfig,
    count: usize,
    t_max: f64,
) -> Result<Vec<TurningEvent>> {
    config.validate()?;
    if !(setup.s > S_MIN) {
        return Err(Error::Degenerate { s: setup.s, s_min: S_MIN });
    }
    let flow = Flow::new(setup, model, Coupling::Dynamic);
    let start = flow.encode(&State::initial(setup));
    let mut solver = Dop853::new(&flow, 0.0, start, config.tolerances())?;
    let mut events = Vec::with_capacity(count);
    let mut last_sign = 0.0;
    while events.len() < count && solver.t() < t_max {
        solver.step(t_max)?;
        let v = solver.y()[1];
        if v == 0.0 {
            continue;
        }
        let sign = v.signum();
        if last_sign != 0.0 && sign != last_sign {
            let (lo, hi) = (solver.t_prev(), solver.t());
            let mut failure = None;
            let t = bisect(
                |t| match solver.dense(t) {
                    Ok(y) => y[1],
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                },
                lo,
                hi,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            let t = t?;
            let x = flow.x_of(solver.dense(t)?[0]);
            events.push(TurningEvent { t, x });
        }
        last_sign = sign;
    }
    if events.len() < count {
        return Err(Error::EventNotFound { found: events.len(), wanted: count, t_max });
    }
    Ok(events)
}

/// State at exactly `t_end`, without sampling.
pub(crate) fn propagate_state(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    config: &IntegratorConfig,
    start: State,
    t_end: f64,
) -> Result<(State, StepStats)> {
    let flow = Flow::new(setup, model, Coupling::Dynamic);
    let (y, stats) =
        dop853::propagate(&flow, start.t, flow.encode(&start), t_end, config.tolerances())?;
    Ok((flow.decode(t_end, y), stats))
}

/// Evolves forward for `n_periods · period`, flips both velocities, evolves
/// for the same time again and returns the largest deviation from the
/// initial state.
pub fn time_reversal_roundtrip(
    setup: &PerturbedSetup,
    model: &PotentialModel,
    config: &IntegratorConfig,
    period: f64,
    n_periods: u32,
) -> Result<f64> {
    config.validate()?;
    if n_periods == 0 || !(period > 0.0 && period.is_finite()) {
        return Err(Error::Domain(format!(
            "need n_periods >= 1 and a positive period, got {n_periods} and {period}"
        )));
    }
    let span = n_periods as f64 * period;
    let start = State::initial(setup);
    let (mid, _) = propagate_state(setup, model, config, start, span)?;
    let flipped = State { t: 0.0, x_dot: -mid.x_dot, u_dot: -mid.u_dot, ..mid };
    let (end, _) = propagate_state(setup, model, config, flipped, span)?;
    Ok((end.x - start.x)
        .abs()
        .max(end.x_dot.abs())
        .max((end.u - 1.0).abs())
        .max(end.u_dot.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::{build_setup, Beta};

    fn setup(w: f64, lambda: f64, beta: f64, s: f64) -> (PotentialModel, PerturbedSetup) {
        let model = PotentialModel::quartic(w, lambda).unwrap();
        let setup = build_setup(&model, Beta::new(beta).unwrap(), s, 1e-13).unwrap();
        (model, setup)
    }

    #[test]
    fn derivative_free_theory_at_start() {
        let (model, setup) = setup(1.0, 0.0, 0.5, 1.0);
        let r = derivative(&setup, &model, &State::initial(&setup)).unwrap();
        assert_eq!(r.x_dot, 0.0);
        assert!((r.x_ddot + 2.0).abs() < 1e-14);
        assert_eq!(r.u_dot, 0.0);
        assert!((r.u_ddot + 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_at_equilibrium() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 0.0);
        let r = derivative(&setup, &model, &State::initial(&setup)).unwrap();
        assert_eq!(r.x_dot, 0.0);
        assert!(r.x_ddot.abs() < 1e-14);
        let k = 2.0 * model.v_prime(setup.x0).unwrap();
        assert_eq!(r.u_ddot, -k);
    }

    #[test]
    fn derivative_is_linear_in_u() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let a = State { t: 0.3, x: 1.7, x_dot: -0.4, u: 0.6, u_dot: 0.2 };
        let b = State { u: 1.2, u_dot: 0.4, ..a };
        let (ra, rb) = (derivative(&setup, &model, &a).unwrap(), derivative(&setup, &model, &b).unwrap());
        assert_eq!(ra.x_dot, rb.x_dot);
        assert_eq!(ra.x_ddot, rb.x_ddot);
        assert_eq!(2.0 * ra.u_dot, rb.u_dot);
        assert_eq!(2.0 * ra.u_ddot, rb.u_ddot);
    }

    #[test]
    fn derivative_rejects_non_positive_x() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let st = State { x: 0.0, ..State::initial(&setup) };
        assert!(matches!(derivative(&setup, &model, &st), Err(Error::Domain(_))));
    }

    #[test]
    fn energy_x_at_start_is_effective_potential() {
        let (model, setup) = setup(1.0, 0.0, 0.5, 1.0);
        let e = energy_x(&setup, &model, &State::initial(&setup)).unwrap();
        assert!((e + 12.418384343139124).abs() < 1e-12);
    }

    #[test]
    fn free_theory_closed_form() {
        let (model, setup) = setup(1.0, 0.0, 0.5, 1.0);
        let config = IntegratorConfig { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let traj = integrate(&setup, &model, &config, 10.0 * PI).unwrap();
        let mut worst_x: f64 = 0.0;
        let mut worst_u: f64 = 0.0;
        for s in &traj.samples {
            let t = s.state.t;
            let x = setup.x0 + 0.5 * (1.0 + (2.0 * t).cos());
            worst_x = worst_x.max((s.state.x - x).abs());
            worst_u = worst_u.max((s.state.u - t.cos()).abs());
        }
        assert!(worst_x < 1e-10, "{worst_x}");
        assert!(worst_u < 1e-10, "{worst_u}");
        assert!(traj.stats.max_energy_drift < 1e-11, "{}", traj.stats.max_energy_drift);
    }

    #[test]
    fn samples_are_on_stride_and_end_exactly() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let config = IntegratorConfig { output_stride: Some(0.1), ..Default::default() };
        let traj = integrate(&setup, &model, &config, 1.05).unwrap();
        let times: Vec<f64> = traj.samples.iter().map(|s| s.state.t).collect();
        assert_eq!(times.len(), 12);
        assert_eq!(times[3], 3.0 * 0.1);
        assert_eq!(*times.last().unwrap(), 1.05);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn no_duplicate_sample_when_t_end_is_on_grid() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let config = IntegratorConfig { output_stride: Some(0.25), ..Default::default() };
        let traj = integrate(&setup, &model, &config, 1.0).unwrap();
        assert_eq!(traj.samples.len(), 5);
    }

    #[test]
    fn equilibrium_stays_put() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 0.0);
        let t_end = 50.0 * 2.0 * PI / setup.omega_eff;
        let traj = integrate(&setup, &model, &IntegratorConfig::default(), t_end).unwrap();
        for s in &traj.samples {
            assert!((s.state.x - setup.x0).abs() < 1e-10);
            assert!((s.state.u - (setup.omega_eff * s.state.t).cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn u_equation_is_linear_along_trajectories() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let config = IntegratorConfig::default();
        let start = State::initial(&setup);
        let (a, _) = propagate_state(&setup, &model, &config, start, 7.3).unwrap();
        let (b, _) =
            propagate_state(&setup, &model, &config, State { u: 3.0, ..start }, 7.3).unwrap();
        // step control sees u, so step sequences differ
        assert!((a.x - b.x).abs() < 1e-9);
        assert!((3.0 * a.u - b.u).abs() < 1e-9);
        assert!((3.0 * a.u_dot - b.u_dot).abs() < 1e-9);
    }

    #[test]
    fn motion_is_bounded_and_positive() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let traj = integrate(&setup, &model, &IntegratorConfig::default(), 30.0).unwrap();
        assert!(traj.min_x() > 0.85);
        assert!(traj.max_x() <= setup.x_init + 1e-9);
    }

    #[test]
    fn free_theory_turning_events() {
        let (model, setup) = setup(1.0, 0.0, 0.5, 1.0);
        let config = IntegratorConfig { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let events = locate_turning_events(&setup, &model, &config, 4, 10.0).unwrap();
        for (i, ev) in events.iter().enumerate() {
            assert!((ev.t - (i + 1) as f64 * PI / 2.0).abs() < 1e-10, "{ev:?}");
            let x = if i % 2 == 0 { setup.x0 } else { setup.x_init };
            assert!((ev.x - x).abs() < 1e-10);
        }
    }

    #[test]
    fn turning_events_require_motion() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 0.0);
        let r = locate_turning_events(&setup, &model, &IntegratorConfig::default(), 2, 10.0);
        assert!(matches!(r, Err(Error::Degenerate { .. })));
    }

    #[test]
    fn turning_events_report_short_horizon() {
        let (model, setup) = setup(1.0, 0.0, 0.5, 1.0);
        let r = locate_turning_events(&setup, &model, &IntegratorConfig::default(), 3, 2.0);
        assert!(matches!(r, Err(Error::EventNotFound { found: 1, wanted: 3, .. })));
    }

    #[test]
    fn roundtrip_free_theory() {
        let (model, setup) = setup(1.0, 0.0, 0.5, 1.0);
        let d = time_reversal_roundtrip(&setup, &model, &IntegratorConfig::default(), PI, 3).unwrap();
        assert!(d < 1e-9, "{d}");
    }

    #[test]
    fn frozen_coupling_is_rigid_cosine() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let traj =
            integrate_with(&setup, &model, &IntegratorConfig::default(), 20.0, Coupling::Frozen).unwrap();
        let omega = (2.0 * model.v_prime(setup.x_init).unwrap()).sqrt();
        for s in &traj.samples {
            assert!((s.state.u - (omega * s.state.t).cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn error_shrinks_at_high_order() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let at = |rtol: f64| {
            let cfg = IntegratorConfig { rtol, atol: rtol * 1e-2, ..Default::default() };
            propagate_state(&setup, &model, &cfg, State::initial(&setup), 20.0).unwrap().0
        };
        let reference = at(1e-13);
        let dev = |s: State| (s.x - reference.x).abs().max((s.u - reference.u).abs());
        let (coarse, fine) = (dev(at(1e-6)), dev(at(1e-8)));
        // the error per unit step of an 8th-order pair scales like tol^(8/9)
        assert!(fine < coarse / 20.0, "{coarse} -> {fine}");
    }

    #[test]
    fn energy_tolerance_is_enforced() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let config = IntegratorConfig { rtol: 1e-4, atol: 1e-4, energy_tol: 1e-14, ..Default::default() };
        let r = integrate(&setup, &model, &config, 20.0);
        assert!(matches!(r, Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn csv_header_and_rows() {
        let (model, setup) = setup(1.0, 1.0, 0.5, 1.0);
        let config = IntegratorConfig { output_stride: Some(0.5), ..Default::default() };
        let traj = integrate(&setup, &model, &config, 1.0).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,x_dot,u,u_dot,energy_x"));
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn config_rejects_non_positive_tolerances() {
        assert!(IntegratorConfig { rtol: 0.0, ..Default::default() }.validate().is_err());
        assert!(IntegratorConfig { output_stride: Some(-1.0), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn error_scale_follows_the_smaller_of_offset_and_position() {
        let (model, setup) = setup(1.0, 10.0, 2.0, 10.0);
        let flow = Flow::new(&setup, &model, Coupling::Dynamic);
        let near_zero = flow.encode(&State { x: 0.02, ..State::initial(&setup) })[0];
        assert!((flow.component_magnitude(0, near_zero) - 0.02).abs() < 1e-12);
        assert_eq!(flow.component_magnitude(0, -0.5), 0.5);
        assert_eq!(flow.component_magnitude(1, -3.0), 3.0);
    }
}
