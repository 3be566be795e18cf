//! Polynomial interaction potentials `V(x) = Σ c_k x^k` with `k ≥ 1`.
//!
//! `x` is the O(N)-invariant `(1/N) Σ φ_a²`, so it is never negative and
//! every evaluation rejects `x < 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A monomial term `coefficient · x^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponent: u32,
    pub coefficient: f64,
}

/// Interaction potential, stored in ascending exponent order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Term>", into = "Vec<Term>")]
pub struct PotentialModel {
    terms: Vec<Term>,
}

impl PotentialModel {
    pub fn new(pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut terms: Vec<Term> = pairs
            .into_iter()
            .map(|(exponent, coefficient)| Term { exponent, coefficient })
            .collect();
        if terms.is_empty() {
            return Err(Error::InvalidModel("at least one term is required".into()));
        }
        for t in &terms {
            if t.exponent == 0 {
                return Err(Error::InvalidModel("exponents must be at least 1".into()));
            }
            if !t.coefficient.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "coefficient of x^{} is not finite",
                    t.exponent
                )));
            }
        }
        terms.sort_by_key(|t| t.exponent);
        if let Some(w) = terms.windows(2).find(|w| w[0].exponent == w[1].exponent) {
            return Err(Error::InvalidModel(format!("duplicate exponent {}", w[0].exponent)));
        }
        Ok(Self { terms })
    }

    /// `V(x) = w²x/2 + λx²/4`.
    pub fn quartic(w: f64, lambda: f64) -> Result<Self> {
        Self::new([(1, 0.5 * w * w), (2, 0.25 * lambda)])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.last().map_or(0, |t| t.exponent)
    }

    /// A copy with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.terms.iter().map(|t| (t.exponent, factor * t.coefficient)))
    }

    pub fn v(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.value_raw(x))
    }

    pub fn v_prime(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.slope_raw(x))
    }

    pub fn v_double_prime(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.curvature_raw(x))
    }

    pub(crate) fn value_raw(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient * x.powi(t.exponent as i32))
            .sum()
    }

    pub(crate) fn slope_raw(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let k = t.exponent as f64;
                k * t.coefficient * x.powi(t.exponent as i32 - 1)
            })
            .sum()
    }

    pub(crate) fn curvature_raw(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.exponent >= 2)
            .map(|t| {
                let k = t.exponent as f64;
                k * (k - 1.0) * t.coefficient * x.powi(t.exponent as i32 - 2)
            })
            .sum()
    }

    /// `(a·V(a) − b·V(b)) / (a − b)`, expanded termwise so it stays accurate
    /// when `a` and `b` are close (and equals `d/dx[x V(x)]` at `a = b`).
    pub(crate) fn xv_divided_difference(&self, a: f64, b: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                // Σ_{j=0..=k} a^j b^(k−j)
                let mut sum = 0.0;
                let mut a_pow = 1.0;
                for j in 0..=t.exponent {
                    sum += a_pow * b.powi((t.exponent - j) as i32);
                    a_pow *= a;
                }
                t.coefficient * sum
            })
            .sum()
    }

    /// Second divided difference of `x V(x)` at `a, b, c`: for each term the
    /// complete homogeneous polynomial of degree `k - 1` in the three points.
    pub(crate) fn xv_second_divided_difference(&self, a: f64, b: f64, c: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let n = t.exponent - 1;
                let mut sum = 0.0;
                let mut a_pow = 1.0;
                for i in 0..=n {
                    let mut b_pow = 1.0;
                    for j in 0..=(n - i) {
                        sum += a_pow * b_pow * c.powi((n - i - j) as i32);
                        b_pow *= b;
                    }
                    a_pow *= a;
                }
                t.coefficient * sum
            })
            .sum()
    }

    /// Dense coefficients of `V'(x)`, index = power of `x`.
    fn slope_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.degree() as usize];
        for t in &self.terms {
            dense[t.exponent as usize - 1] += t.exponent as f64 * t.coefficient;
        }
        dense
    }

    /// True iff `V'(x) > 0` on `(0, x_max]` and `V'(0) ≥ 0`.
    ///
    /// Exact up to rounding: the minimum of `V'` over the interval is attained
    /// at an endpoint or at a real root of `V''`, and those roots are isolated
    /// recursively through the derivative chain. A uniform sample sweep backs
    /// up the analysis.
    pub fn check_monotonic(&self, x_max: f64) -> bool {
        self.first_monotonicity_violation(x_max).is_none()
    }

    /// Point where monotonicity fails on `[0, x_max]`, if any.
    pub(crate) fn first_monotonicity_violation(&self, x_max: f64) -> Option<f64> {
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Some(0.0);
        }
        let slope = self.slope_dense();
        if horner(&slope, 0.0) < 0.0 {
            return Some(0.0);
        }
        let critical = real_roots_in(&derivative(&slope), 0.0, x_max);
        let samples = (1..=256).map(|i| x_max * i as f64 / 256.0);
        critical
            .into_iter()
            .filter(|&c| c > 0.0)
            .chain(samples)
            .find(|&x| horner(&slope, x) <= 0.0)
    }

    /// Like [`check_monotonic`](Self::check_monotonic), but reports where it fails.
    pub fn require_monotonic(&self, x_max: f64) -> Result<()> {
        match self.first_monotonicity_violation(x_max) {
            None => Ok(()),
            Some(at) => Err(Error::NonMonotonic {
                x_max,
                at,
                slope: self.slope_raw(at.max(0.0)),
            }),
        }
    }
}

fn check_domain(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("potential evaluated at x = {x} < 0")))
    }
}

fn horner(dense: &[f64], x: f64) -> f64 {
    dense.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn derivative(dense: &[f64]) -> Vec<f64> {
    dense
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &c)| j as f64 * c)
        .collect()
}

fn effective_degree(dense: &[f64]) -> usize {
    dense.iter().rposition(|&c| c != 0.0).unwrap_or(0)
}

/// Real roots of a dense polynomial in `[a, b]`, ascending.
fn real_roots_in(dense: &[f64], a: f64, b: f64) -> Vec<f64> {
    let deg = effective_degree(dense);
    if deg == 0 {
        return Vec::new();
    }
    let mut points = vec![a];
    points.extend(real_roots_in(&derivative(dense), a, b));
    points.push(b);

    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.last().is_none_or(|&last| r > last) {
            roots.push(r);
        }
    };
    for pair in points.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let (flo, fhi) = (horner(dense, lo), horner(dense, hi));
        if flo == 0.0 {
            push(lo, &mut roots);
        } else if flo.signum() != fhi.signum() && fhi != 0.0 {
            push(bisect_sign_change(dense, lo, hi, flo), &mut roots);
        }
    }
    if horner(dense, b) == 0.0 {
        push(b, &mut roots);
    }
    roots
}

fn bisect_sign_change(dense: &[f64], mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let fm = horner(dense, mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

impl FromStr for PotentialModel {
    type Err = Error;

    /// Parses comma-separated `k:c` pairs, e.g. `1:0.5,2:0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let pairs = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|pair| {
                let (k, c) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidModel(format!("expected k:c, got `{pair}`")))?;
                let k: u32 = k
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidModel(format!("bad exponent `{k}`")))?;
                let c: f64 = c
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidModel(format!("bad coefficient `{c}`")))?;
                Ok((k, c))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }
}

impl fmt::Display for PotentialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", t.exponent, t.coefficient)?;
        }
        Ok(())
    }
}

impl TryFrom<Vec<Term>> for PotentialModel {
    type Error = Error;

    fn try_from(terms: Vec<Term>) -> Result<Self> {
        Self::new(terms.into_iter().map(|t| (t.exponent, t.coefficient)))
    }
}

impl From<PotentialModel> for Vec<Term> {
    fn from(model: PotentialModel) -> Self {
        model.terms
    }
}
