//! Composite Gauss-Legendre quadrature.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integral of `f` over `[a, b]` split into `panels` equal panels.
    pub fn integrate_composite(
        &self,
        mut f: impl FnMut(f64) -> f64,
        a: f64,
        b: f64,
        panels: usize,
    ) -> f64 {
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + width * p as f64;
                let mid = lo + 0.5 * width;
                let sum: f64 = self
                    .nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(&x, &w)| w * f(mid + 0.5 * width * x))
                    .sum();
                0.5 * width * sum
            })
            .sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 33] {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "n = {n}: {s}");
        }
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        let rule = GaussLegendre::new(6);
        // ∫_{-1}^{1} x^10 = 2/11
        let v = rule.integrate_composite(|x| x.powi(10), -1.0, 1.0, 1);
        assert!((v - 2.0 / 11.0).abs() < 1e-15);
        let v = rule.integrate_composite(|x| x.powi(11), -1.0, 1.0, 1);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn three_point_nodes() {
        let rule = GaussLegendre::new(3);
        assert!((rule.nodes()[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((rule.weights()[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn composite_converges_for_smooth_integrand() {
        let rule = GaussLegendre::new(8);
        let v = rule.integrate_composite(f64::sin, 0.0, PI, 4);
        assert!((v - 2.0).abs() < 1e-14);
    }
}
