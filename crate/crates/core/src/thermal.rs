//! Thermal initial data for the perturbed state.
//!
//! The condensate starts from the thermal expectation `x₀`, fixed by the
//! large-N self-consistent gap equation
//!
//! ```text
//! x₀ = coth(βω/2) / (2ω),    ω² = 2 V'(x₀),
//! ```
//!
//! and is displaced by the perturbation strength `s = ξ²/N`. The conserved
//! energy per degree of freedom is `E = x₀V'(x₀) + V(x₀ + s)` (virial theorem
//! for the kinetic part), and the condensate then moves in
//! `Ṽ(x) = 4x(V(x) − E)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::format::{serialize_sig17, sig17};
use crate::potential::PotentialModel;
use crate::roots;

pub const DEFAULT_GAP_TOL: f64 = 1e-12;

/// Upper end of the gap-equation bracket search.
pub const GAP_BRACKET_LIMIT: f64 = 1e6;

/// Inverse temperature; `+∞` is the ground state.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Beta(f64);

impl Beta {
    pub const GROUND_STATE: Beta = Beta(f64::INFINITY);

    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 {
            Ok(Beta(beta))
        } else {
            Err(Error::Domain(format!("inverse temperature must be positive, got {beta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_ground_state(self) -> bool {
        self.0.is_infinite()
    }
}

impl FromStr for Beta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Ok(Beta::GROUND_STATE),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("bad inverse temperature `{s}`")))
                .and_then(Beta::new),
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ground_state() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_ground_state() {
            s.serialize_str("inf")
        } else {
            serialize_sig17(&self.0, s)
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Number(v) => Beta::new(v),
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// `⟨x⟩` of a harmonic mode of frequency `omega`: `coth(βω/2)/(2ω)`.
pub fn thermal_width(omega: f64, beta: Beta) -> f64 {
    if omega <= 0.0 {
        return f64::INFINITY;
    }
    if beta.is_ground_state() {
        0.5 / omega
    } else {
        0.5 / (omega * (0.5 * beta.0 * omega).tanh())
    }
}

/// Self-consistent frequency `ω(x) = √(2V'(x))`.
fn gap_frequency(model: &PotentialModel, x: f64) -> f64 {
    (2.0 * model.slope_raw(x)).sqrt()
}

/// `|x − coth(βω/2)/(2ω)|` with `ω = √(2V'(x))`.
pub fn gap_residual(model: &PotentialModel, beta: Beta, x: f64) -> f64 {
    (x - thermal_width(gap_frequency(model, x), beta)).abs()
}

/// Solves the gap equation for `x₀` by bisection.
///
/// The bracket starts at `[0, 1]` and doubles its upper end until the sign
/// changes, verifying monotonicity of `V` on the bracket at each stage.
pub fn solve_gap_equation(model: &PotentialModel, beta: Beta, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let g = |x: f64| x - thermal_width(gap_frequency(model, x), beta);

    let mut hi = 1.0;
    loop {
        model.require_monotonic(hi)?;
        if g(hi) > 0.0 {
            break;
        }
        hi *= 2.0;
        if hi > GAP_BRACKET_LIMIT {
            return Err(Error::NoBracket { x_hi: GAP_BRACKET_LIMIT });
        }
    }
    let x0 = roots::bisect(g, 0.0, hi)?;
    let residual = gap_residual(model, beta, x0);
    if !(x0 > 0.0) || !(residual < tol) {
        return Err(Error::NoConvergence(format!(
            "gap equation residual {residual} at x0 = {x0} exceeds {tol}"
        )));
    }
    Ok(x0)
}

/// Truncated Matsubara sum `(1/β) Σ_{|n|≤n_max} 1/(ω_n² + ω²)`, `ω_n = 2πn/β`,
/// without any tail correction.
pub fn matsubara_partial_sum(omega: f64, beta: f64, n_max: u64) -> f64 {
    let omega2 = omega * omega;
    let step = 2.0 * PI / beta;
    // smallest terms first
    let positive: f64 = (1..=n_max)
        .rev()
        .map(|n| {
            let wn = step * n as f64;
            1.0 / (wn * wn + omega2)
        })
        .sum();
    (2.0 * positive + 1.0 / omega2) / beta
}

/// Matsubara-sum oracle for `x₀(ω)`: the truncated sum plus the analytic
/// tail `β / (2π² n_max)` of the omitted `|n| > n_max` terms.
pub fn matsubara_x0(omega: f64, beta: f64, n_max: u64) -> f64 {
    debug_assert!(n_max >= 1 && beta > 0.0 && omega > 0.0);
    matsubara_partial_sum(omega, beta, n_max) + beta / (2.0 * PI * PI * n_max as f64)
}

/// `E = x₀V'(x₀) + V(x_init)`: virial kinetic energy plus the potential at
/// the displaced starting point.
pub fn energy_per_dof(model: &PotentialModel, x0: f64, x_init: f64) -> Result<f64> {
    if !(x0 > 0.0) {
        return Err(Error::Domain(format!("x0 must be positive, got {x0}")));
    }
    if !(x_init >= x0) {
        return Err(Error::Domain(format!("x_init = {x_init} is below x0 = {x0}")));
    }
    Ok(x0 * model.slope_raw(x0) + model.value_raw(x_init))
}

/// Everything the evolution needs about the perturbed initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSetup {
    pub beta: Beta,
    #[serde(serialize_with = "serialize_sig17")]
    pub x0: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub s: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub x_init: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub e_per_dof: f64,
    #[serde(serialize_with = "serialize_sig17")]
    pub omega_eff: f64,
}

impl PerturbedSetup {
    /// Assembles the setup for a known thermal expectation `x0`.
    pub fn from_x0(model: &PotentialModel, beta: Beta, x0: f64, s: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!("perturbation strength must be ≥ 0, got {s}")));
        }
        let x_init = x0 + s;
        let e_per_dof = energy_per_dof(model, x0, x_init)?;
        Ok(Self {
            beta,
            x0,
            s,
            x_init,
            e_per_dof,
            omega_eff: gap_frequency(model, x0),
        })
    }

    /// `Ṽ(x) = 4x(V(x) − E)`.
    pub fn effective_potential(&self, model: &PotentialModel, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(self.effective_potential_raw(model, x))
    }

    /// `dṼ/dx = 4(V(x) + xV'(x) − E)`.
    pub fn effective_gradient(&self, model: &PotentialModel, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(self.effective_gradient_raw(model, x))
    }

    pub(crate) fn effective_potential_raw(&self, model: &PotentialModel, x: f64) -> f64 {
        4.0 * x * (model.value_raw(x) - self.e_per_dof)
    }

    pub(crate) fn effective_gradient_raw(&self, model: &PotentialModel, x: f64) -> f64 {
        // same association as e_per_dof, so x = x0 = x_init cancels exactly
        4.0 * (x * model.slope_raw(x) + model.value_raw(x) - self.e_per_dof)
    }

    /// `Ṽ″(x) = 8V'(x) + 4xV″(x)`.
    pub fn effective_curvature(&self, model: &PotentialModel, x: f64) -> f64 {
        8.0 * model.slope_raw(x) + 4.0 * x * model.curvature_raw(x)
    }
}

impl fmt::Display for PerturbedSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "beta={} x0={} s={} x_init={} e_per_dof={} omega_eff={}",
            self.beta,
            sig17(self.x0),
            sig17(self.s),
            sig17(self.x_init),
            sig17(self.e_per_dof),
            sig17(self.omega_eff)
        )
    }
}

fn check_x(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("effective potential evaluated at x = {x} < 0")))
    }
}

/// Solves the gap equation and assembles the perturbed setup.
pub fn build_setup(model: &PotentialModel, beta: Beta, s: f64, tol: f64) -> Result<PerturbedSetup> {
    let x0 = solve_gap_equation(model, beta, tol)?;
    let setup = PerturbedSetup::from_x0(model, beta, x0, s)?;
    model.require_monotonic(setup.x_init)?;
    Ok(setup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free(w: f64) -> PotentialModel {
        PotentialModel::quartic(w, 0.0).unwrap()
    }

    fn reference_quartic() -> PotentialModel {
        PotentialModel::quartic(1.0, 1.0).unwrap()
    }

    fn coth(z: f64) -> f64 {
        1.0 / z.tanh()
    }

    #[test]
    fn beta_parsing_and_json() {
        assert!("inf".parse::<Beta>().unwrap().is_ground_state());
        assert_eq!("0.5".parse::<Beta>().unwrap().value(), 0.5);
        assert!("0".parse::<Beta>().is_err());
        assert!("-1".parse::<Beta>().is_err());
        assert_eq!(serde_json::to_string(&Beta::GROUND_STATE).unwrap(), "\"inf\"");
        let b: Beta = serde_json::from_str("\"inf\"").unwrap();
        assert!(b.is_ground_state());
        let b: Beta = serde_json::from_str("0.25").unwrap();
        assert_eq!(b.value(), 0.25);
    }

    #[test]
    fn free_theory_ground_state() {
        let x0 = solve_gap_equation(&free(1.0), Beta::GROUND_STATE, 1e-12).unwrap();
        assert_eq!(x0, 0.5);
        let setup = build_setup(&free(2.0), Beta::GROUND_STATE, 0.0, 1e-12).unwrap();
        assert_eq!(setup.x0, 0.25);
        assert_eq!(setup.omega_eff, 2.0);
    }

    #[test]
    fn free_theory_finite_temperature() {
        let x0 = solve_gap_equation(&free(1.0), Beta::new(0.5).unwrap(), 1e-12).unwrap();
        assert!((x0 - coth(0.25) / 2.0).abs() < 1e-14);
        assert!((x0 - 2.041_494_082_536_798).abs() < 1e-14);
    }

    #[test]
    fn reference_model_gap_value() {
        // 40-digit reference: root of x = coth(β√(1+x)/2)/(2√(1+x)) at β = 0.5
        let x0 = solve_gap_equation(&reference_quartic(), Beta::new(0.5).unwrap(), 1e-12).unwrap();
        assert!((x0 - 1.027_671_770_107_260_5).abs() < 1e-14, "{x0}");
    }

    #[test]
    fn reference_model_gap_matches_self_consistent_matsubara_iteration() {
        // independent route: fixed-point iteration of the Matsubara sum
        let model = reference_quartic();
        let beta = 0.5;
        let mut x: f64 = 1.0;
        for _ in 0..80 {
            let omega = (2.0 * model.v_prime(x).unwrap()).sqrt();
            x = 0.5 * x + 0.5 * matsubara_x0(omega, beta, 1_000_000);
        }
        let x0 = solve_gap_equation(&model, Beta::new(beta).unwrap(), 1e-12).unwrap();
        assert!((x - x0).abs() < 1e-9, "{x} vs {x0}");
    }

    #[test]
    fn non_monotonic_potential_is_rejected() {
        let m: PotentialModel = "1:-1".parse().unwrap();
        let err = solve_gap_equation(&m, Beta::new(0.5).unwrap(), 1e-12).unwrap_err();
        assert!(matches!(err, Error::NonMonotonic { .. }));
    }

    #[test]
    fn gap_without_bracket() {
        // V'(x) ~ 1e-14: width ~ 1e14 > bracket limit
        let m = PotentialModel::new([(1, 5e-15)]).unwrap();
        let err = solve_gap_equation(&m, Beta::GROUND_STATE, 1e-12).unwrap_err();
        assert!(matches!(err, Error::NoBracket { .. }));
    }

    #[test]
    fn matsubara_closed_form() {
        let v = matsubara_x0(1.0, 0.5, 100_000);
        assert!((v - coth(0.25) / 2.0).abs() < 1e-6);
        let v = matsubara_x0(1.0, 100.0, 1_000_000);
        assert!((v - 0.5).abs() < 1e-5);
    }

    #[test]
    fn matsubara_convergence_rates() {
        let exact = coth(0.25) / 2.0;
        let raw = |n| (matsubara_partial_sum(1.0, 0.5, n) - exact).abs();
        let corrected = |n| (matsubara_x0(1.0, 0.5, n) - exact).abs();
        // uncorrected truncation is first order in 1/n_max
        let r = raw(1000) / raw(2000);
        assert!((r - 2.0).abs() < 0.01, "raw ratio {r}");
        // the analytic tail removes the leading term, leaving second order
        let r = corrected(1000) / corrected(2000);
        assert!((r - 4.0).abs() < 0.05, "corrected ratio {r}");
    }

    #[test]
    fn matsubara_agrees_with_closed_form_on_random_points() {
        // deterministic pseudo-random (ω, β) in [0.3, 3] × [0.2, 5]
        let mut state = 0x2545_f491_4f6c_dd1d_u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let omega = 0.3 + 2.7 * next();
            let beta = 0.2 + 4.8 * next();
            let closed = thermal_width(omega, Beta::new(beta).unwrap());
            let sum = matsubara_x0(omega, beta, 100_000);
            assert!((sum - closed).abs() < 1e-5, "ω={omega} β={beta}: {sum} vs {closed}");
        }
    }

    #[test]
    fn gap_residual_below_tolerance_for_various_models() {
        let models = ["1:0.5,2:0.25", "1:0.125,2:2.5", "2:1", "1:2,3:0.1", "1:0.5,2:0.025"];
        for m in models {
            let model: PotentialModel = m.parse().unwrap();
            for beta in ["0.25", "1", "4", "inf"] {
                let beta: Beta = beta.parse().unwrap();
                let x0 = solve_gap_equation(&model, beta, 1e-12).unwrap();
                assert!(gap_residual(&model, beta, x0) < 1e-12, "{m} {beta}");
            }
        }
    }

    #[test]
    fn x0_grows_with_temperature() {
        let model = reference_quartic();
        let betas = [8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.1];
        let x0s: Vec<f64> = betas
            .iter()
            .map(|&b| solve_gap_equation(&model, Beta::new(b).unwrap(), 1e-12).unwrap())
            .collect();
        let ground = solve_gap_equation(&model, Beta::GROUND_STATE, 1e-12).unwrap();
        assert!(ground <= x0s[0]);
        assert!(x0s.windows(2).all(|w| w[0] <= w[1]), "{x0s:?}");
    }

    #[test]
    fn energy_examples() {
        let model = free(1.0);
        let x0 = coth(0.25) / 2.0;
        let e = energy_per_dof(&model, x0, x0 + 1.0).unwrap();
        assert!((e - (x0 * 0.5 + (x0 + 1.0) * 0.5)).abs() < 1e-15);
        assert!((e - 2.541_494_082_536_798).abs() < 1e-14);
        let m = reference_quartic();
        let e0 = energy_per_dof(&m, 1.3, 1.3).unwrap();
        assert_eq!(e0, 1.3 * m.v_prime(1.3).unwrap() + m.v(1.3).unwrap());
        assert!(energy_per_dof(&m, 0.0, 1.0).is_err());
        assert!(energy_per_dof(&m, 1.0, 0.5).is_err());
    }

    #[test]
    fn reference_model_energy_value() {
        let setup = build_setup(&reference_quartic(), Beta::new(0.5).unwrap(), 1.0, 1e-12).unwrap();
        assert!((setup.e_per_dof - 3.083_589_605_467_433_4).abs() < 1e-13);
    }

    #[test]
    fn effective_potential_examples() {
        let model = free(1.0);
        let setup = build_setup(&model, Beta::new(0.5).unwrap(), 1.0, 1e-12).unwrap();
        assert_eq!(setup.effective_potential(&model, 0.0).unwrap(), 0.0);
        let v = setup.effective_potential(&model, setup.x_init).unwrap();
        assert!((v - -12.418_384_343_139_124).abs() < 1e-12, "{v}");
        let expected = -4.0 * setup.x_init * setup.x0 * model.v_prime(setup.x0).unwrap();
        assert!((v - expected).abs() < 1e-12);
        assert!(setup.effective_potential(&model, -1.0).is_err());
        assert!(setup.effective_gradient(&model, -1.0).is_err());
    }

    #[test]
    fn effective_gradient_examples() {
        let model = free(1.0);
        let setup = build_setup(&model, Beta::new(0.5).unwrap(), 1.0, 1e-12).unwrap();
        let g = setup.effective_gradient(&model, setup.x_init).unwrap();
        assert!((g - 2.0).abs() < 1e-13, "{g}");
        // finite differences of Ṽ
        let model = reference_quartic();
        let setup = build_setup(&model, Beta::new(0.5).unwrap(), 1.0, 1e-12).unwrap();
        for x in [0.3, 1.0, 1.7, 2.5] {
            let h = 1e-4;
            let fd = (setup.effective_potential(&model, x + h).unwrap()
                - setup.effective_potential(&model, x - h).unwrap())
                / (2.0 * h);
            assert!((fd - setup.effective_gradient(&model, x).unwrap()).abs() < 1e-7);
        }
    }

    #[test]
    fn unperturbed_x0_is_an_exact_equilibrium() {
        let models = ["1:0.5,2:0.25", "1:0.125,2:2.5", "2:1", "1:2,3:0.1,4:0.003"];
        for m in models {
            let model: PotentialModel = m.parse().unwrap();
            for beta in ["0.25", "0.5", "2", "inf"] {
                let setup = build_setup(&model, beta.parse().unwrap(), 0.0, 1e-12).unwrap();
                assert_eq!(setup.x_init, setup.x0);
                let g = setup.effective_gradient(&model, setup.x0).unwrap();
                assert!(g.abs() < 1e-10, "{m} {beta}: {g}");
            }
        }
    }

    #[test]
    fn well_is_finite_between_turning_points() {
        // Ṽ(x) < Ṽ(x_init) just inside x_init, and the well closes before x = 0
        let model = reference_quartic();
        let setup = build_setup(&model, Beta::new(0.5).unwrap(), 1.0, 1e-12).unwrap();
        let top = setup.effective_potential_raw(&model, setup.x_init);
        let x_f = 0.853_758_410_919_047_9;
        for i in 1..100 {
            let x = x_f + (setup.x_init - x_f) * i as f64 / 100.0;
            assert!(setup.effective_potential_raw(&model, x) < top);
        }
        assert!(setup.effective_potential_raw(&model, 0.0) > top);
    }

    #[test]
    fn setup_json_field_names() {
        let setup = build_setup(&free(1.0), Beta::GROUND_STATE, 1.0, 1e-12).unwrap();
        let json = serde_json::to_value(setup).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["beta", "x0", "s", "x_init", "e_per_dof", "omega_eff"] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(json["beta"], "inf");
        let text = serde_json::to_string(&setup).unwrap();
        assert!(text.contains("\"x0\":0.50000000000000000"), "{text}");
        let back: PerturbedSetup = serde_json::from_str(&text).unwrap();
        assert_eq!(back, setup);
    }

    #[test]
    fn setup_rejects_negative_s() {
        assert!(build_setup(&free(1.0), Beta::GROUND_STATE, -0.1, 1e-12).is_err());
        assert!(build_setup(&free(1.0), Beta::GROUND_STATE, 0.1, 0.0).is_err());
    }
}
