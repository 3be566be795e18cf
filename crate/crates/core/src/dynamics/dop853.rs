//! Explicit Runge-Kutta 8(5,3) integrator with 7th-order dense output.
//!
//! Step-size control and the continuous extension follow Hairer's DOP853.
//! The integrator only moves forward in time; backward evolution of the
//! reversible systems in this crate is done by flipping velocities.

use super::tableau::*;
use crate::error::{Error, Result};

/// `dy/dt = f(t, y)`. Returning `None` marks `y` as outside the domain of
/// the system; the integrator then rejects the trial step and retries with a
/// smaller step.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> Option<[f64; N]>;

    /// Size of component `i` for relative error control.
    fn magnitude(&self, _i: usize, y: f64) -> f64 {
        y.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub evaluations: u64,
}

const SAFE: f64 = 0.9;
// bounds on h / h_new
const FAC_MIN: f64 = 1.0 / 6.0;
const FAC_MAX: f64 = 3.0;
const MAX_STEPS: u64 = 50_000_000;

/// Data of the last accepted step needed by the continuous extension.
#[derive(Clone)]
struct LastStep<const N: usize> {
    t_old: f64,
    h: f64,
    y_old: [f64; N],
    y_new: [f64; N],
    k1: [f64; N],
    k6: [f64; N],
    k7: [f64; N],
    k8: [f64; N],
    k9: [f64; N],
    k10: [f64; N],
    k11: [f64; N],
    k12: [f64; N],
    k_new: [f64; N],
    cont: Option<[[f64; N]; 8]>,
}

pub struct Dop853<'a, S, const N: usize> {
    system: &'a S,
    tol: Tolerances,
    t: f64,
    y: [f64; N],
    f: [f64; N],
    h: f64,
    last_rejected: bool,
    last: Option<LastStep<N>>,
    stats: StepStats,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn lin<const N: usize>(terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        for (c, k) in terms {
            out[i] += c * k[i];
        }
    }
    out
}

impl<'a, S: OdeSystem<N>, const N: usize> Dop853<'a, S, N> {
    pub fn new(system: &'a S, t0: f64, y0: [f64; N], tol: Tolerances) -> Result<Self> {
        if !(tol.rtol > 0.0 && tol.atol > 0.0 && tol.max_step > 0.0) {
            return Err(Error::Domain(format!("tolerances must be positive: {tol:?}")));
        }
        let f = system
            .rhs(t0, &y0)
            .ok_or_else(|| Error::Domain("initial state outside the system's domain".into()))?;
        let mut solver = Self {
            system,
            tol,
            t: t0,
            y: y0,
            f,
            h: 0.0,
            last_rejected: false,
            last: None,
            stats: StepStats { evaluations: 1, ..StepStats::default() },
        };
        solver.h = solver.initial_step();
        Ok(solver)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Start of the last accepted step (equals `t()` before the first step).
    pub fn t_prev(&self) -> f64 {
        self.last.as_ref().map_or(self.t, |l| l.t_old)
    }

    pub fn y_prev(&self) -> &[f64; N] {
        self.last.as_ref().map_or(&self.y, |l| &l.y_old)
    }

    fn eval(&mut self, t: f64, y: &[f64; N]) -> Option<[f64; N]> {
        self.stats.evaluations += 1;
        self.system.rhs(t, y)
    }

    fn scale(&self, i: usize, a: f64, b: f64) -> f64 {
        let m = self.system.magnitude(i, a).max(self.system.magnitude(i, b));
        self.tol.atol + self.tol.rtol * m
    }

    fn initial_step(&mut self) -> f64 {
        let (y, f) = (self.y, self.f);
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..N {
            let sk = self.scale(i, y[i], 0.0);
            dnf += (f[i] / sk).powi(2);
            dny += (y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * (dny / dnf).sqrt() };
        h = h.min(self.tol.max_step);
        let probe = axpy(&y, h, &[(1.0, &f)]);
        let der2 = match self.eval(self.t + h, &probe) {
            Some(f2) => {
                let mut acc = 0.0;
                for i in 0..N {
                    acc += ((f2[i] - f[i]) / self.scale(i, y[i], 0.0)).powi(2);
                }
                acc.sqrt() / h
            }
            None => return h * 1e-3,
        };
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        (100.0 * h).min(h1).min(self.tol.max_step)
    }

    /// Takes one accepted step, never stepping past `t_limit`. Landing on
    /// `t_limit` sets the time to exactly `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        if self.t >= t_limit {
            return Err(Error::Domain(format!(
                "cannot step from t = {} to t_limit = {t_limit}",
                self.t
            )));
        }
        loop {
            if self.stats.accepted + self.stats.rejected >= MAX_STEPS {
                return Err(Error::NumericalFailure(format!(
                    "step limit reached at t = {}",
                    self.t
                )));
            }
            let mut h = self.h.min(self.tol.max_step);
            let mut hits_limit = false;
            if self.t + h >= t_limit || self.t + 1.01 * h >= t_limit {
                h = t_limit - self.t;
                hits_limit = true;
            }
            if h <= 16.0 * f64::EPSILON * self.t.abs().max(1.0) {
                return Err(Error::NumericalFailure(format!(
                    "step size underflow (h = {h}) at t = {}",
                    self.t
                )));
            }
            match self.try_step(h, hits_limit.then_some(t_limit)) {
                Some(true) => return Ok(()),
                Some(false) => {}
                None => {
                    // trial stage left the domain
                    self.stats.rejected += 1;
                    self.last_rejected = true;
                    self.h = 0.25 * h;
                }
            }
        }
    }

    /// `Some(true)` accepted, `Some(false)` rejected on error, `None` domain exit.
    fn try_step(&mut self, h: f64, landing: Option<f64>) -> Option<bool> {
        let (t, y, k1) = (self.t, self.y, self.f);
        let k2 = self.eval(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
        let k3 = self.eval(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = self.eval(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A43, &k3)]))?;
        let k5 = self.eval(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A53, &k3), (A54, &k4)]))?;
        let k6 = self.eval(t + C6 * h, &axpy(&y, h, &[(A61, &k1), (A64, &k4), (A65, &k5)]))?;
        let k7 = self.eval(
            t + C7 * h,
            &axpy(&y, h, &[(A71, &k1), (A74, &k4), (A75, &k5), (A76, &k6)]),
        )?;
        let k8 = self.eval(
            t + C8 * h,
            &axpy(&y, h, &[(A81, &k1), (A84, &k4), (A85, &k5), (A86, &k6), (A87, &k7)]),
        )?;
        let k9 = self.eval(
            t + C9 * h,
            &axpy(
                &y,
                h,
                &[(A91, &k1), (A94, &k4), (A95, &k5), (A96, &k6), (A97, &k7), (A98, &k8)],
            ),
        )?;
        let k10 = self.eval(
            t + C10 * h,
            &axpy(
                &y,
                h,
                &[
                    (A101, &k1),
                    (A104, &k4),
                    (A105, &k5),
                    (A106, &k6),
                    (A107, &k7),
                    (A108, &k8),
                    (A109, &k9),
                ],
            ),
        )?;
        let k11 = self.eval(
            t + C11 * h,
            &axpy(
                &y,
                h,
                &[
                    (A111, &k1),
                    (A114, &k4),
                    (A115, &k5),
                    (A116, &k6),
                    (A117, &k7),
                    (A118, &k8),
                    (A119, &k9),
                    (A1110, &k10),
                ],
            ),
        )?;
        let t_new = landing.unwrap_or(t + h);
        let k12 = self.eval(
            t_new,
            &axpy(
                &y,
                h,
                &[
                    (A121, &k1),
                    (A124, &k4),
                    (A125, &k5),
                    (A126, &k6),
                    (A127, &k7),
                    (A128, &k8),
                    (A129, &k9),
                    (A1210, &k10),
                    (A1211, &k11),
                ],
            ),
        )?;
        let slope = lin(&[
            (B1, &k1),
            (B6, &k6),
            (B7, &k7),
            (B8, &k8),
            (B9, &k9),
            (B10, &k10),
            (B11, &k11),
            (B12, &k12),
        ]);
        let y_new = axpy(&y, h, &[(1.0, &slope)]);

        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..N {
            let sk = self.scale(i, y[i], y_new[i]);
            let e3 = slope[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
            err2 += (e3 / sk).powi(2);
            let e5 = ER1 * k1[i]
                + ER6 * k6[i]
                + ER7 * k7[i]
                + ER8 * k8[i]
                + ER9 * k9[i]
                + ER10 * k10[i]
                + ER11 * k11[i]
                + ER12 * k12[i];
            err += (e5 / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (deno * N as f64)).sqrt();
        if !err.is_finite() {
            return None;
        }

        let fac11 = err.powf(1.0 / 8.0);
        let fac = (fac11 / SAFE).clamp(FAC_MIN, FAC_MAX);
        let mut h_new = h / fac;

        if err <= 1.0 {
            let k_new = self.eval(t_new, &y_new)?;
            if self.last_rejected {
                h_new = h_new.min(h);
            }
            self.last_rejected = false;
            self.stats.accepted += 1;
            self.last = Some(LastStep {
                t_old: t,
                h,
                y_old: y,
                y_new,
                k1,
                k6,
                k7,
                k8,
                k9,
                k10,
                k11,
                k12,
                k_new,
                cont: None,
            });
            self.t = t_new;
            self.y = y_new;
            self.f = k_new;
            self.h = h_new;
            Some(true)
        } else {
            self.stats.rejected += 1;
            self.last_rejected = true;
            self.h = h / (fac11 / SAFE).min(FAC_MAX);
            Some(false)
        }
    }

    fn continuous_extension(&mut self) -> Result<[[f64; N]; 8]> {
        let last = self
            .last
            .as_ref()
            .ok_or_else(|| Error::Domain("dense output requested before the first step".into()))?;
        if let Some(cont) = last.cont {
            return Ok(cont);
        }
        let l = last.clone();
        let h = l.h;
        let ydiff = lin(&[(1.0, &l.y_new), (-1.0, &l.y_old)]);
        let bspl = lin(&[(h, &l.k1), (-1.0, &ydiff)]);
        let c4 = lin(&[(1.0, &ydiff), (-h, &l.k_new), (-1.0, &bspl)]);

        let k14 = self
            .eval(
                l.t_old + C14 * h,
                &axpy(
                    &l.y_old,
                    h,
                    &[
                        (A141, &l.k1),
                        (A147, &l.k7),
                        (A148, &l.k8),
                        (A149, &l.k9),
                        (A1410, &l.k10),
                        (A1411, &l.k11),
                        (A1412, &l.k12),
                        (A1413, &l.k_new),
                    ],
                ),
            )
            .ok_or_else(domain_exit)?;
        let k15 = self
            .eval(
                l.t_old + C15 * h,
                &axpy(
                    &l.y_old,
                    h,
                    &[
                        (A151, &l.k1),
                        (A156, &l.k6),
                        (A157, &l.k7),
                        (A158, &l.k8),
                        (A1511, &l.k11),
                        (A1512, &l.k12),
                        (A1513, &l.k_new),
                        (A1514, &k14),
                    ],
                ),
            )
            .ok_or_else(domain_exit)?;
        let k16 = self
            .eval(
                l.t_old + C16 * h,
                &axpy(
                    &l.y_old,
                    h,
                    &[
                        (A161, &l.k1),
                        (A166, &l.k6),
                        (A167, &l.k7),
                        (A168, &l.k8),
                        (A169, &l.k9),
                        (A1613, &l.k_new),
                        (A1614, &k14),
                        (A1615, &k15),
                    ],
                ),
            )
            .ok_or_else(domain_exit)?;

        let row = |d: [f64; 12]| {
            let v = lin(&[
                (d[0], &l.k1),
                (d[1], &l.k6),
                (d[2], &l.k7),
                (d[3], &l.k8),
                (d[4], &l.k9),
                (d[5], &l.k10),
                (d[6], &l.k11),
                (d[7], &l.k12),
                (d[8], &l.k_new),
                (d[9], &k14),
                (d[10], &k15),
                (d[11], &k16),
            ]);
            v.map(|c| c * h)
        };
        let cont = [
            l.y_old,
            ydiff,
            bspl,
            c4,
            row([D41, D46, D47, D48, D49, D410, D411, D412, D413, D414, D415, D416]),
            row([D51, D56, D57, D58, D59, D510, D511, D512, D513, D514, D515, D516]),
            row([D61, D66, D67, D68, D69, D610, D611, D612, D613, D614, D615, D616]),
            row([D71, D76, D77, D78, D79, D710, D711, D712, D713, D714, D715, D716]),
        ];
        if let Some(last) = self.last.as_mut() {
            last.cont = Some(cont);
        }
        Ok(cont)
    }

    /// Dense output at `t` inside the last accepted step.
    pub fn dense(&mut self, t: f64) -> Result<[f64; N]> {
        let cont = self.continuous_extension()?;
        let last = self.last.as_ref().expect("continuous extension implies a step");
        if t == self.t {
            return Ok(self.y);
        }
        let s = (t - last.t_old) / last.h;
        let s1 = 1.0 - s;
        let mut out = [0.0; N];
        for i in 0..N {
            let conpar = cont[4][i] + s * (cont[5][i] + s1 * (cont[6][i] + s * cont[7][i]));
            out[i] = cont[0][i]
                + s * (cont[1][i] + s1 * (cont[2][i] + s * (cont[3][i] + s1 * conpar)));
        }
        Ok(out)
    }
}

fn domain_exit() -> Error {
    Error::NumericalFailure("dense-output stage left the system's domain".into())
}

/// Integrates from `t0` to exactly `t_end` and returns the final state.
pub fn propagate<S: OdeSystem<N>, const N: usize>(
    system: &S,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    tol: Tolerances,
) -> Result<([f64; N], StepStats)> {
    if t_end == t0 {
        return Ok((y0, StepStats::default()));
    }
    let mut solver = Dop853::new(system, t0, y0, tol)?;
    while solver.t() < t_end {
        solver.step(t_end)?;
    }
    Ok((*solver.y(), solver.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator(f64);

    impl OdeSystem<2> for Oscillator {
        fn rhs(&self, _t: f64, y: &[f64; 2]) -> Option<[f64; 2]> {
            Some([y[1], -self.0 * self.0 * y[0]])
        }
    }

    struct Exponential;

    impl OdeSystem<1> for Exponential {
        fn rhs(&self, _t: f64, y: &[f64; 1]) -> Option<[f64; 1]> {
            Some([y[0]])
        }
    }

    /// y' = -2t y² has y = 1/(1 + t²); rejects y > 1.2 to exercise the
    /// domain-rejection path.
    struct Bounded;

    impl OdeSystem<1> for Bounded {
        fn rhs(&self, t: f64, y: &[f64; 1]) -> Option<[f64; 1]> {
            (y[0] <= 1.2).then(|| [-2.0 * t * y[0] * y[0]])
        }
    }

    fn tol(rtol: f64, atol: f64) -> Tolerances {
        Tolerances { rtol, atol, max_step: f64::INFINITY }
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let sys = Oscillator(2.0);
        let t_end = 20.0;
        let (y, stats) = propagate(&sys, 0.0, [1.0, 0.0], t_end, tol(1e-12, 1e-14)).unwrap();
        assert!((y[0] - (2.0 * t_end).cos()).abs() < 1e-10);
        assert!((y[1] + 2.0 * (2.0 * t_end).sin()).abs() < 1e-10);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn exponential_growth() {
        let (y, _) = propagate(&Exponential, 0.0, [1.0], 5.0, tol(1e-12, 1e-14)).unwrap();
        assert!((y[0] / 5f64.exp() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn lands_exactly_on_t_end() {
        let sys = Oscillator(1.0);
        let mut solver = Dop853::new(&sys, 0.0, [1.0, 0.0], tol(1e-10, 1e-12)).unwrap();
        while solver.t() < 3.3 {
            solver.step(3.3).unwrap();
        }
        assert_eq!(solver.t(), 3.3);
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let sys = Oscillator(1.0);
        let mut solver = Dop853::new(&sys, 0.0, [1.0, 0.0], tol(1e-12, 1e-14)).unwrap();
        let mut worst: f64 = 0.0;
        while solver.t() < 10.0 {
            solver.step(10.0).unwrap();
            let (a, b) = (solver.t_prev(), solver.t());
            for j in 1..8 {
                let t = a + (b - a) * j as f64 / 8.0;
                let y = solver.dense(t).unwrap();
                worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
            }
            // endpoints reproduce the step values
            let y = solver.dense(a).unwrap();
            assert_eq!(y, *solver.y_prev());
        }
        assert!(worst < 1e-11, "dense error {worst}");
    }

    #[test]
    fn domain_exits_are_rejected_not_fatal() {
        let (y, stats) = propagate(&Bounded, -3.0, [0.1], 3.0, tol(1e-10, 1e-12)).unwrap();
        assert!((y[0] - 0.1).abs() < 1e-9);
        assert!(stats.rejected > 0 || stats.accepted > 0);
    }

    #[test]
    fn error_scales_with_tolerance_at_high_order() {
        // global error of the 8th-order scheme shrinks much faster than rtol
        let sys = Oscillator(1.0);
        let err = |rtol: f64| {
            let (y, _) = propagate(&sys, 0.0, [1.0, 0.0], 30.0, tol(rtol, rtol * 1e-2)).unwrap();
            (y[0] - 30f64.cos()).abs()
        };
        let (coarse, fine) = (err(1e-7), err(1e-9));
        assert!(fine < coarse / 20.0, "{coarse} -> {fine}");
    }

    #[test]
    fn rejects_bad_tolerances() {
        assert!(Dop853::new(&Oscillator(1.0), 0.0, [1.0, 0.0], tol(0.0, 1e-12)).is_err());
    }
}
