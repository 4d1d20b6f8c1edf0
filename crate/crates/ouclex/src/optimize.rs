//! One-dimensional maximization of `δ ↦ b₁(δ)` over `(ln 7 / λ, ∞)`.
//!
//! The objective has no tractable derivative, so the maximizer is found
//! by a coarse logarithmic scan followed by golden-section refinement.
//! The objective satisfies the exact scaling law
//! `b₁(c/λ; λ) = √λ · G(c)`, which makes `δ*·λ` and `b₁(δ*)/√λ`
//! λ-independent constants; `conjecture_check` measures exactly that.

use crate::bounds::b1_of_delta;
use crate::error::Error;
use crate::params::OUParams;
use crate::Result;
use serde::Serialize;

/// Result of one maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimumRecord {
    pub lambda: f64,
    /// Maximizer, units time; always `> ln(7)/lambda`.
    pub delta_star: f64,
    /// `b1_of_delta(delta_star, lambda)` by construction.
    pub b1_star: f64,
    /// Number of objective evaluations spent.
    pub evaluations: u64,
}

/// Maximizes `b1_of_delta(·, p)` by a 40-point logarithmic scan on
/// `(ln7/λ·(1+1e−6), 100/λ]` followed by golden-section refinement to
/// relative tolerance `rel_tol` on δ. Deterministic.
pub fn optimize_delta(p: &OUParams, rel_tol: f64) -> Result<OptimumRecord> {
    if !(1e-12..=1e-2).contains(&rel_tol) {
        return Err(Error::invalid("rel_tol", format!("must be in [1e-12, 1e-2], got {rel_tol}")));
    }
    let mut evals = 0u64;
    let mut objective = |delta: f64| {
        evals += 1;
        b1_of_delta(delta, p)
    };

    const GRID: usize = 40;
    let lo = 7.0f64.ln() / p.lambda * (1.0 + 1e-6);
    let hi = 100.0 / p.lambda;
    let log_lo = lo.ln();
    let step = (hi.ln() - log_lo) / (GRID - 1) as f64;
    let grid: Vec<f64> = (0..GRID).map(|i| (log_lo + i as f64 * step).exp()).collect();
    let values: Vec<f64> = grid.iter().map(|&d| objective(d)).collect();

    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let Some(best) = best else {
        return Err(Error::OptimizationFailed(
            "objective non-finite everywhere on the scan grid".into(),
        ));
    };
    // The maximizer cannot sit at the upper scan bound: b1 decays like
    // delta^{-1/2} out there. Assert the scan saw that decay.
    debug_assert!(best + 1 < GRID, "objective not decreasing at the scan bound");

    // Guard against multimodality: refine every grid cell whose value
    // ties the best within tolerance but is not adjacent to it, and keep
    // the best refined optimum. On this objective the scan is unimodal
    // and the loop visits exactly one cell.
    let tie_tol = 1e-9 * values[best].abs();
    let mut candidates = vec![best];
    for (i, v) in values.iter().enumerate() {
        if i + 1 < best || i > best + 1 {
            if (v - values[best]).abs() <= tie_tol {
                candidates.push(i);
            }
        }
    }

    let mut best_delta = f64::NAN;
    let mut best_value = f64::NEG_INFINITY;
    for &cell in &candidates {
        let a = if cell == 0 { lo } else { grid[cell - 1] };
        let b = if cell + 1 >= GRID { hi } else { grid[cell + 1] };
        let (delta, value) = golden_section_max(&mut objective, a, b, rel_tol);
        if value > best_value {
            best_value = value;
            best_delta = delta;
        }
    }

    Ok(OptimumRecord {
        lambda: p.lambda,
        delta_star: best_delta,
        b1_star: best_value,
        evaluations: evals,
    })
}

/// Golden-section maximization on `[a, b]` to relative width `rel_tol`.
fn golden_section_max(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > rel_tol * 0.5 * (a.abs() + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Runs [`optimize_delta`] for each rate, in order, at the tight fixed
/// tolerance used for table reproduction.
pub fn reproduce_table(lambdas: &[f64]) -> Result<Vec<OptimumRecord>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let p = OUParams::new(lambda, std::f64::consts::SQRT_2)?;
            optimize_delta(&p, 1e-10)
        })
        .collect()
}

/// Scale-invariance diagnostics of a set of optima.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjectureReport {
    /// `delta_star * lambda` per record.
    pub delta_products: Vec<f64>,
    /// `b1_star / sqrt(lambda)` per record.
    pub b1_ratios: Vec<f64>,
    pub delta_product_mean: f64,
    /// `(max - min) / mean` of the delta products.
    pub delta_product_spread: f64,
    pub b1_ratio_mean: f64,
    /// `(max - min) / mean` of the b1 ratios.
    pub b1_ratio_spread: f64,
}

/// Computes `δ*·λ` and `b₁(δ*)/√λ` for each record together with their
/// means and maximal relative spreads. Errors with fewer than 2 records.
pub fn conjecture_check(records: &[OptimumRecord]) -> Result<ConjectureReport> {
    if records.len() < 2 {
        return Err(Error::invalid("records", "need at least 2 records"));
    }
    let delta_products: Vec<f64> = records.iter().map(|r| r.delta_star * r.lambda).collect();
    let b1_ratios: Vec<f64> = records.iter().map(|r| r.b1_star / r.lambda.sqrt()).collect();
    let spread = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        (mean, (max - min) / mean.abs())
    };
    let (dp_mean, dp_spread) = spread(&delta_products);
    let (b1_mean, b1_spread) = spread(&b1_ratios);
    Ok(ConjectureReport {
        delta_products,
        b1_ratios,
        delta_product_mean: dp_mean,
        delta_product_spread: dp_spread,
        b1_ratio_mean: b1_mean,
        b1_ratio_spread: b1_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ou(lambda: f64) -> OUParams {
        OUParams::new(lambda, std::f64::consts::SQRT_2).unwrap()
    }

    #[test]
    fn lambda_one_optimum() {
        let r = optimize_delta(&ou(1.0), 1e-10).unwrap();
        // Frozen from an independent 50-digit golden-section run.
        assert_relative_eq!(r.delta_star, 2.220_296_335_284_95, max_relative = 1e-7);
        assert_relative_eq!(r.b1_star, 0.032_551_084_053_345_56, max_relative = 1e-12);
        assert!(r.delta_star > 7.0f64.ln());
        assert_eq!(r.b1_star, b1_of_delta(r.delta_star, &ou(1.0)));
        // Optimality certificate.
        let tol = 1e-10;
        assert!(b1_of_delta(r.delta_star * (1.0 + tol), &ou(1.0)) <= r.b1_star);
        assert!(b1_of_delta(r.delta_star * (1.0 - tol), &ou(1.0)) <= r.b1_star);
    }

    #[test]
    fn table_rows_match_published_values() {
        // (lambda, delta*, b1*) to the printed precision of the table.
        let rows = [
            (2.0, 1.11, 0.0460),
            (0.01, 222.0, 0.00325),
            (10.0, 0.222, 0.103),
        ];
        for (lambda, dstar, b1) in rows {
            let r = optimize_delta(&ou(lambda), 1e-10).unwrap();
            assert_relative_eq!(r.delta_star, dstar, max_relative = 5e-3);
            assert_relative_eq!(r.b1_star, b1, max_relative = 1.2e-2);
        }
    }

    #[test]
    fn reproduce_table_is_consistent_with_single_runs() {
        let single = optimize_delta(&ou(1.0), 1e-10).unwrap();
        let table = reproduce_table(&[1.0]).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0], single);
    }

    #[test]
    fn rel_tol_domain() {
        assert!(optimize_delta(&ou(1.0), 1e-13).is_err());
        assert!(optimize_delta(&ou(1.0), 0.5).is_err());
    }

    #[test]
    fn conjecture_products_are_flat() {
        let records = reproduce_table(&[0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0]).unwrap();
        let report = conjecture_check(&records).unwrap();
        assert!(report.delta_product_spread <= 1e-6, "spread {}", report.delta_product_spread);
        assert!(report.b1_ratio_spread <= 1e-6, "spread {}", report.b1_ratio_spread);
        assert_relative_eq!(report.delta_product_mean, 2.220_296, max_relative = 1e-6);
        assert_relative_eq!(report.b1_ratio_mean, 0.032_551_08, max_relative = 1e-6);
        assert!(conjecture_check(&records[..1]).is_err());
    }

    #[test]
    fn quarter_lambda_scaling() {
        let records = reproduce_table(&[0.75, 3.0]).unwrap();
        assert_relative_eq!(records[0].delta_star / records[1].delta_star, 4.0, max_relative = 1e-7);
        assert_relative_eq!(records[0].b1_star / records[1].b1_star, 0.5, max_relative = 1e-7);
    }

    proptest! {
        // delta* * lambda is lambda-independent within 10x the optimizer
        // tolerance, and the certificate holds at the returned optimum.
        #[test]
        fn prop_scaling_equivariance(lambda in 0.02f64..50.0) {
            let rel_tol = 1e-8;
            let base = optimize_delta(&ou(1.0), rel_tol).unwrap();
            let r = optimize_delta(&ou(lambda), rel_tol).unwrap();
            let product = r.delta_star * lambda;
            prop_assert!((product - base.delta_star).abs() <= 10.0 * rel_tol * base.delta_star);
            // Certificate: displace far enough that the quadratic drop
            // beats both float noise and the optimizer's tolerance.
            let slack = r.b1_star * (1.0 + 1e-12);
            prop_assert!(b1_of_delta(r.delta_star * 1.001, &ou(lambda)) <= slack);
            prop_assert!(b1_of_delta(r.delta_star * 0.999, &ou(lambda)) <= slack);
        }

        // Identical inputs give identical records.
        #[test]
        fn prop_determinism(lambda in 0.05f64..20.0) {
            let a = optimize_delta(&ou(lambda), 1e-9).unwrap();
            let b = optimize_delta(&ou(lambda), 1e-9).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
