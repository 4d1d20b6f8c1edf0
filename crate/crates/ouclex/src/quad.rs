//! Gauss–Hermite quadrature.
//!
//! Nodes and weights for the physicists' weight `w(x) = exp(-x^2)`:
//!
//! ```text
//! ∫ f(x) e^{-x^2} dx ≈ Σ_i w_i f(x_i)
//! ```
//!
//! Every integrand in this crate is Gaussian-weighted, so expectations
//! against `N(0, s^2)` reduce to
//!
//! ```text
//! E[f] = (1/√π) Σ_i w_i f(√2 · s · x_i).
//! ```

use crate::error::Error;
use crate::Result;

/// Precomputed Gauss–Hermite rule of a given order.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes the `n`-point rule by Newton iteration on the normalized
    /// three-term recurrence
    ///
    /// ```text
    /// p_0 = π^{-1/4},   p_{j+1}(x) = x √(2/(j+1)) p_j(x) − √(j/(j+1)) p_{j-1}(x),
    /// ```
    ///
    /// with weights `w_i = 2 / p_n'(x_i)^2` where `p_n'(x) = √(2n) p_{n-1}(x)`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || n > 512 {
            return Err(Error::invalid("nodes", format!("order must be in [2, 512], got {n}")));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let mut z = 0.0f64;
        // Roots are symmetric: solve the positive half, mirror the rest.
        for i in 0..(n + 1) / 2 {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut converged = false;
            for _ in 0..200 {
                let (p, dp) = eval_normalized(n, z);
                let dz = p / dp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::OptimizationFailed(format!(
                    "Gauss-Hermite root {i} of order {n} did not converge"
                )));
            }
            // Refresh p' at the converged point for the weight.
            let (_, pp) = eval_normalized(n, z);
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            let w = 2.0 / (pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
            let (_, dp) = eval_normalized(n, 0.0);
            weights[n / 2] = 2.0 / (dp * dp);
        }
        // Ascending order is convenient for callers and tests.
        nodes.reverse();
        weights.reverse();
        Ok(GaussHermite { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Abscissas rescaled for `N(0, std^2)`: `√2 · std · x_i`.
    pub fn gaussian_points(&self, std: f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| std::f64::consts::SQRT_2 * std * x).collect()
    }

    /// Weights normalized for a probability measure: `w_i / √π`.
    pub fn gaussian_weights(&self) -> Vec<f64> {
        let norm = 1.0 / std::f64::consts::PI.sqrt();
        self.weights.iter().map(|&w| w * norm).collect()
    }

    /// `∫ f dN(0, std^2)`.
    pub fn integrate_gaussian(&self, std: f64, f: impl Fn(f64) -> f64) -> f64 {
        let pts = self.gaussian_points(std);
        let ws = self.gaussian_weights();
        let mut sum = 0.0;
        let mut c = 0.0;
        for (x, w) in pts.iter().zip(ws.iter()) {
            let y = w * f(*x) - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum
    }

    /// `∬ f d(N(0, std^2) ⊗ N(0, std^2))`.
    pub fn integrate_gaussian2(&self, std: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let pts = self.gaussian_points(std);
        let ws = self.gaussian_weights();
        let mut sum = 0.0;
        let mut c = 0.0;
        for (x, wx) in pts.iter().zip(ws.iter()) {
            for (y, wy) in pts.iter().zip(ws.iter()) {
                let v = wx * wy * f(*x, *y) - c;
                let t = sum + v;
                c = (t - sum) - v;
                sum = t;
            }
        }
        sum
    }
}

/// Value and derivative of the degree-`n` orthonormal Hermite polynomial.
fn eval_normalized(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 0.0f64;
    let mut p = std::f64::consts::PI.powf(-0.25);
    for j in 0..n {
        let jf = j as f64;
        let p_next = x * (2.0 / (jf + 1.0)).sqrt() * p - (jf / (jf + 1.0)).sqrt() * p_prev;
        p_prev = p;
        p = p_next;
    }
    let dp = (2.0 * n as f64).sqrt() * p_prev;
    (p, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn low_order_rule_matches_known_values() {
        // 2-point rule: x = ±1/√2, w = √π/2.
        let gh = GaussHermite::new(2).unwrap();
        assert_relative_eq!(gh.nodes()[1], 0.5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gh.weights()[0], std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-14);
        // 3-point rule: x = 0, ±√(3/2); w(0) = 2√π/3.
        let gh = GaussHermite::new(3).unwrap();
        assert_relative_eq!(gh.nodes()[2], (1.5f64).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gh.weights()[1], 2.0 * std::f64::consts::PI.sqrt() / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for n in [2, 5, 16, 64, 128, 129] {
            let gh = GaussHermite::new(n).unwrap();
            let total: f64 = gh.weights().iter().sum();
            assert_relative_eq!(total, std::f64::consts::PI.sqrt(), max_relative = 1e-13);
        }
    }

    #[test]
    fn gaussian_moments_are_exact() {
        let gh = GaussHermite::new(24).unwrap();
        let s = 1.7;
        assert_relative_eq!(gh.integrate_gaussian(s, |_| 1.0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(gh.integrate_gaussian(s, |x| x * x), s * s, max_relative = 1e-13);
        // E[x^4] = 3 s^4; a 24-point rule is exact for degree <= 47.
        assert_relative_eq!(gh.integrate_gaussian(s, |x| x.powi(4)), 3.0 * s.powi(4), max_relative = 1e-13);
        // Non-polynomial check: E[e^x] = e^{s^2/2}.
        assert_relative_eq!(
            gh.integrate_gaussian(s, f64::exp),
            (s * s / 2.0).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn bivariate_product_factorizes() {
        let gh = GaussHermite::new(32).unwrap();
        let s = 0.8;
        let v = gh.integrate_gaussian2(s, |x, y| x * x * y * y);
        assert_relative_eq!(v, s.powi(4), max_relative = 1e-12);
    }

    #[test]
    fn order_bounds_are_enforced() {
        assert!(GaussHermite::new(1).is_err());
        assert!(GaussHermite::new(513).is_err());
    }

    proptest! {
        // Odd monomials integrate to zero by symmetry; even monomials of
        // degree < 2n are integrated exactly.
        #[test]
        fn prop_polynomial_exactness(n in 6usize..40, k in 0u32..6) {
            let gh = GaussHermite::new(n).unwrap();
            let got = gh.integrate_gaussian(1.0, |x| x.powi(2 * k as i32 + 1));
            prop_assert!(got.abs() < 1e-10);
            // E[x^{2k}] = (2k-1)!! for N(0,1).
            let mut expect = 1.0;
            let mut m = 2 * k as i64 - 1;
            while m > 0 {
                expect *= m as f64;
                m -= 2;
            }
            let got_even = gh.integrate_gaussian(1.0, |x| x.powi(2 * k as i32));
            prop_assert!((got_even - expect).abs() <= 1e-10 * expect.max(1.0));
        }
    }
}
