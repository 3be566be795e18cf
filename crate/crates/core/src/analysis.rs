//! Envelope and beat metrics of the perturbation amplitude `u(t)`.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::format::{serialize_sig17, sig17};

/// Minimum number of samples per `u`-oscillation for envelope extraction.
pub const MIN_SAMPLES_PER_OSCILLATION: f64 = 20.0;

pub const DEFAULT_LATE_FRACTION: f64 = 0.2;

/// Recurrence ratios below this count as decay.
pub const RECURRENCE_FLOOR: f64 = 0.5;

const MIN_EXTREMA: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    #[serde(serialize_with = "serialize_sig17")]
    pub t: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub amplitude: f64,
}

/// Local maxima of `|u|`, in time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvelopeSeries {
    pub extrema: Vec<Extremum>,
}

impl EnvelopeSeries {
    pub fn len(&self) -> usize {
        self.extrema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extrema.is_empty()
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,amplitude")?;
        for e in &self.extrema {
            writeln!(out, "{},{}", sig17(e.t), sig17(e.amplitude))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeatReport {
    #[serde(serialize_with = "serialize_sig17")]
    pub min_envelope: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub max_envelope_late: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub recurrence_ratio: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub modulation_depth: f64,
    pub n_envelope_cycles: usize,
}

impl BeatReport {
    pub fn is_decaying(&self) -> bool {
        self.recurrence_ratio < RECURRENCE_FLOOR
    }
}

/// Envelope of the `u` column of a trajectory. The sampling stride must
/// resolve the `u`-oscillation at `ω_eff` with at least 20 samples.
pub fn extract_envelope(trajectory: &Trajectory) -> Result<EnvelopeSeries> {
    let limit = 2.0 * PI / trajectory.setup.omega_eff / MIN_SAMPLES_PER_OSCILLATION;
    if !(trajectory.stride <= limit) {
        return Err(Error::Undersampled { stride: trajectory.stride, limit });
    }
    let t: Vec<f64> = trajectory.samples.iter().map(|s| s.state.t).collect();
    let u: Vec<f64> = trajectory.samples.iter().map(|s| s.state.u).collect();
    Ok(envelope_of(&t, &u))
}

/// Local maxima of `|u|` over sampled data, each refined by the parabola
/// through the discrete maximum and its two neighbours. Endpoints are never
/// reported.
pub fn envelope_of(t: &[f64], u: &[f64]) -> EnvelopeSeries {
    assert_eq!(t.len(), u.len(), "time and value columns differ in length");
    let a: Vec<f64> = u.iter().map(|v| v.abs()).collect();
    let mut extrema = Vec::new();
    for i in 1..a.len().saturating_sub(1) {
        if a[i] >= a[i - 1] && a[i] > a[i + 1] && a[i] > 0.0 {
            let (tp, ap) = parabola_peak([t[i - 1], t[i], t[i + 1]], [a[i - 1], a[i], a[i + 1]]);
            extrema.push(Extremum { t: tp, amplitude: ap });
        }
    }
    EnvelopeSeries { extrema }
}

/// Vertex of the parabola through three points with `t0 < t1 < t2`.
fn parabola_peak(t: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
    let d0 = (y[1] - y[0]) / h0;
    let d1 = (y[2] - y[1]) / h1;
    let curvature = (d1 - d0) / (h0 + h1);
    if !(curvature < 0.0) {
        return (t[1], y[1]);
    }
    // slope at t1 of the interpolant
    let slope = (d0 * h1 + d1 * h0) / (h0 + h1);
    let dt = -slope / (2.0 * curvature);
    (t[1] + dt, y[1] - curvature * dt * dt)
}

/// Beat metrics of an envelope. The late window is the final
/// `late_fraction` of the span between first and last extremum.
pub fn beat_report(envelope: &EnvelopeSeries, late_fraction: f64) -> Result<BeatReport> {
    if !(late_fraction > 0.0 && late_fraction < 1.0) {
        return Err(Error::Domain(format!("late_fraction must lie in (0, 1), got {late_fraction}")));
    }
    let ex = &envelope.extrema;
    if ex.len() < MIN_EXTREMA {
        return Err(Error::InsufficientData(format!(
            "{} envelope extrema, need at least {MIN_EXTREMA}",
            ex.len()
        )));
    }
    let min_envelope = ex.iter().map(|e| e.amplitude).fold(f64::INFINITY, f64::min);
    let (t_first, t_last) = (ex[0].t, ex[ex.len() - 1].t);
    let t_late = t_first + (1.0 - late_fraction) * (t_last - t_first);
    let max_envelope_late = ex
        .iter()
        .filter(|e| e.t >= t_late)
        .map(|e| e.amplitude)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut n_envelope_cycles = 0;
    let mut last_sign = 0.0;
    for w in ex.windows(2) {
        let d = w[1].amplitude - w[0].amplitude;
        if d == 0.0 {
            continue;
        }
        if last_sign != 0.0 && d.signum() != last_sign {
            n_envelope_cycles += 1;
        }
        last_sign = d.signum();
    }

    Ok(BeatReport {
        min_envelope,
        max_envelope_late,
        // the initial amplitude is u(0) = 1
        recurrence_ratio: max_envelope_late,
        modulation_depth: 1.0 - min_envelope,
        n_envelope_cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(f: impl Fn(f64) -> f64, t_end: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let n = (t_end / dt) as usize;
        let t: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let u = t.iter().map(|&t| f(t)).collect();
        (t, u)
    }

    #[test]
    fn parabola_vertex_is_exact_for_quadratics() {
        let f = |t: f64| 2.0 - 3.0 * (t - 0.37).powi(2);
        let (t, y) = parabola_peak([0.1, 0.3, 0.6], [f(0.1), f(0.3), f(0.6)]);
        assert!((t - 0.37).abs() < 1e-14 && (y - 2.0).abs() < 1e-14);
    }

    #[test]
    fn constant_envelope() {
        let (t, u) = sampled(|t| (1.7 * t).cos(), 60.0, 2.0 * PI / 1.7 / 256.0);
        let env = envelope_of(&t, &u);
        assert!(env.extrema.iter().all(|e| (e.amplitude - 1.0).abs() < 1e-8));
        // maxima of |cos| every half period, t = 0 excluded
        assert!((env.extrema[0].t - PI / 1.7).abs() < 1e-6);
        let r = beat_report(&env, DEFAULT_LATE_FRACTION).unwrap();
        assert!(r.modulation_depth.abs() < 1e-8);
        assert!((r.recurrence_ratio - 1.0).abs() < 1e-8);
    }

    #[test]
    fn modulated_depth_recovered() {
        for d in [0.1, 0.5] {
            let (omega, big) = (5.0, 0.1);
            let f = |t: f64| (omega * t).cos() * (1.0 - d * (big * t).sin().powi(2));
            let (t, u) = sampled(f, 2.0 * PI / big, 2.0 * PI / omega / 200.0);
            let r = beat_report(&envelope_of(&t, &u), DEFAULT_LATE_FRACTION).unwrap();
            assert!((r.modulation_depth / d - 1.0).abs() < 0.01, "{d}: {}", r.modulation_depth);
            assert!(r.recurrence_ratio > 0.99);
            assert!(r.n_envelope_cycles >= 1);
        }
    }

    #[test]
    fn damped_series_is_flagged() {
        let (t, u) = sampled(|t| (-0.1 * t).exp() * t.cos(), 50.0, 2.0 * PI / 200.0);
        let env = envelope_of(&t, &u);
        let r = beat_report(&env, DEFAULT_LATE_FRACTION).unwrap();
        let (first, last) = (env.extrema[0].t, env.extrema.last().unwrap().t);
        let t_late = first + 0.8 * (last - first);
        let first_late = env.extrema.iter().find(|e| e.t >= t_late).unwrap().t;
        // peaks of e^{-0.1t}|cos t| sit slightly below e^{-0.1t}
        assert!((r.recurrence_ratio / (-0.1 * first_late).exp() - 1.0).abs() < 1e-2);
        assert!(r.is_decaying());
        assert_eq!(r.n_envelope_cycles, 0);
    }

    #[test]
    fn too_few_extrema() {
        let (t, u) = sampled(f64::cos, 10.0, 0.01);
        assert!(matches!(
            beat_report(&envelope_of(&t, &u), 0.2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn late_fraction_validated() {
        let (t, u) = sampled(f64::cos, 100.0, 0.01);
        let env = envelope_of(&t, &u);
        assert!(beat_report(&env, 0.0).is_err());
        assert!(beat_report(&env, 1.0).is_err());
    }

    #[test]
    fn csv_output() {
        let env = EnvelopeSeries { extrema: vec![Extremum { t: 0.5, amplitude: 0.25 }] };
        let mut buf = Vec::new();
        env.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,amplitude\n0.50000000000000000,0.25000000000000000\n"
        );
    }

    use crate::dynamics::{integrate, integrate_with, Coupling, IntegratorConfig};
    use crate::floquet::period_by_events;
    use crate::potential::PotentialModel;
    use crate::thermal::{build_setup, Beta};

    fn reference_setup(s: f64) -> (PotentialModel, crate::PerturbedSetup) {
        let model = PotentialModel::quartic(1.0, 1.0).unwrap();
        let setup = build_setup(&model, Beta::new(0.5).unwrap(), s, 1e-13).unwrap();
        (model, setup)
    }

    #[test]
    fn reference_model_beats() {
        let (model, setup) = reference_setup(1.0);
        let config = IntegratorConfig { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let period = period_by_events(&setup, &model, &config).unwrap().period;
        let traj = integrate(&setup, &model, &config, 50.0 * period).unwrap();
        let env = extract_envelope(&traj).unwrap();
        assert_eq!(env.len(), 44);
        let r = beat_report(&env, DEFAULT_LATE_FRACTION).unwrap();
        // reference extrema are exact maxima; parabolic refinement at the
        // default stride is good to about 1e-9
        assert!((r.min_envelope - 0.648886489118338).abs() < 5e-9, "{}", r.min_envelope);
        assert!((r.max_envelope_late - 0.999995614460773).abs() < 5e-9, "{}", r.max_envelope_late);
        assert_eq!(r.n_envelope_cycles, 10);
    }

    #[test]
    fn frozen_coupling_has_no_beats() {
        let (model, setup) = reference_setup(1.0);
        let traj =
            integrate_with(&setup, &model, &IntegratorConfig::default(), 90.0, Coupling::Frozen).unwrap();
        let r = beat_report(&extract_envelope(&traj).unwrap(), DEFAULT_LATE_FRACTION).unwrap();
        assert!(r.modulation_depth.abs() < 1e-6);
    }

    #[test]
    fn equilibrium_envelope_is_flat() {
        let (model, setup) = reference_setup(0.0);
        let traj = integrate(&setup, &model, &IntegratorConfig::default(), 60.0).unwrap();
        let env = extract_envelope(&traj).unwrap();
        assert!(env.extrema.iter().all(|e| (e.amplitude - 1.0).abs() < 1e-8));
    }

    #[test]
    fn coarse_stride_is_rejected() {
        let (model, setup) = reference_setup(1.0);
        let config = IntegratorConfig { output_stride: Some(0.5), ..Default::default() };
        let traj = integrate(&setup, &model, &config, 20.0).unwrap();
        assert!(matches!(extract_envelope(&traj), Err(Error::Undersampled { .. })));
    }
}
