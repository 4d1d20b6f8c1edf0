//! Ergodicity diagnostics along trajectories: empirical autocovariance
//! with batch-means errors, exponential decorrelation fits, Green–Kubo
//! asymptotic variance, and a replica-based CLT check.

use crate::drift::DriftSpec;
use crate::error::Error;
use crate::params::{kahan_sum, OUParams, SamplePath};
use crate::rng::sub_seed;
use crate::sim::{simulate_delay, simulate_reference, SimConfig};
use crate::Result;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Empirical stationary autocovariance of an observable at grid lags,
/// with batch-means standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceCurve {
    /// Lags in time units, `0, dt, 2·dt, …`.
    pub lags: Vec<f64>,
    pub cov: Vec<f64>,
    pub se: Vec<f64>,
    pub dt: f64,
}

/// Estimates `cov(ℓ) = Cov(f(X_t), f(X_{t+ℓ}))` for lags up to
/// `max_lag`, centering with the global path mean of `f`.
///
/// Standard errors come from batch means with batch length equal to the
/// maximal lag in steps, so neighbouring batches are nearly independent
/// whenever the curve has decayed by `max_lag`. Requires the path to
/// span at least `20·max_lag`.
pub fn estimate_covariance(
    path: &SamplePath,
    f: impl Fn(f64) -> f64,
    max_lag: f64,
) -> Result<CovarianceCurve> {
    if !(max_lag.is_finite() && max_lag > 0.0) {
        return Err(Error::invalid("max_lag", format!("must be finite and > 0, got {max_lag}")));
    }
    let dt = path.dt;
    let span = (path.len() - 1) as f64 * dt;
    if span < 20.0 * max_lag * (1.0 - 1e-12) {
        return Err(Error::PathTooShort(format!(
            "path spans {span} but 20 × max_lag = {} is required",
            20.0 * max_lag
        )));
    }
    let l_steps = (max_lag / dt).round() as usize;
    if l_steps == 0 {
        return Err(Error::invalid("max_lag", format!("shorter than one step dt = {dt}")));
    }
    let ys: Vec<f64> = path.values.iter().map(|&x| f(x)).collect();
    let n = ys.len();
    let mean = kahan_sum(ys.iter().copied()) / n as f64;
    let centered: Vec<f64> = ys.iter().map(|y| y - mean).collect();

    let mut lags = Vec::with_capacity(l_steps + 1);
    let mut cov = Vec::with_capacity(l_steps + 1);
    let mut se = Vec::with_capacity(l_steps + 1);
    let batch = l_steps; // batch length in steps
    for k in 0..=l_steps {
        let m = n - k;
        let products: Vec<f64> = (0..m).map(|i| centered[i] * centered[i + k]).collect();
        let c = kahan_sum(products.iter().copied()) / m as f64;
        let nb = m / batch;
        let s = if nb >= 2 {
            let bms: Vec<f64> = (0..nb)
                .map(|j| kahan_sum(products[j * batch..(j + 1) * batch].iter().copied()) / batch as f64)
                .collect();
            let bm_mean = kahan_sum(bms.iter().copied()) / nb as f64;
            let var = kahan_sum(bms.iter().map(|b| (b - bm_mean) * (b - bm_mean)))
                / (nb as f64 - 1.0);
            (var / nb as f64).sqrt()
        } else {
            0.0
        };
        lags.push(k as f64 * dt);
        cov.push(c);
        se.push(s);
    }
    Ok(CovarianceCurve { lags, cov, se, dt })
}

/// Weighted log-linear fit `cov(ℓ) ≈ θ₁ e^{-θ₂ ℓ}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpFit {
    pub theta1: f64,
    pub theta2: f64,
    /// Weighted coefficient of determination in log space.
    pub r2: f64,
    /// Number of lags that passed the significance filter.
    pub usable_lags: usize,
    /// Set when the fitted curve does not decay (`θ₂ ≤ 0`); tail
    /// extrapolation is untrustworthy in that case.
    pub low_decay: bool,
}

/// Fits the exponential model on the lags where the curve is resolved,
/// `cov > 3·se`, weighting each log-point by its inverse delta-method
/// variance `(cov/se)²` (uniform weights when every `se` is zero).
pub fn fit_exponential(curve: &CovarianceCurve) -> Result<ExpFit> {
    let mut pts: Vec<(f64, f64, f64)> = Vec::new(); // (lag, ln cov, weight)
    let all_exact = curve.se.iter().all(|&s| s == 0.0);
    for i in 0..curve.lags.len() {
        let (c, s) = (curve.cov[i], curve.se[i]);
        if c > 3.0 * s && c > 0.0 {
            let w = if all_exact { 1.0 } else { (c / s) * (c / s) };
            if w.is_finite() {
                pts.push((curve.lags[i], c.ln(), w));
            }
        }
    }
    if pts.len() < 4 {
        return Err(Error::FitUnavailable(format!(
            "only {} lags have cov > 3·se; at least 4 are needed",
            pts.len()
        )));
    }
    let sw = kahan_sum(pts.iter().map(|p| p.2));
    let sx = kahan_sum(pts.iter().map(|p| p.2 * p.0));
    let sy = kahan_sum(pts.iter().map(|p| p.2 * p.1));
    let sxx = kahan_sum(pts.iter().map(|p| p.2 * p.0 * p.0));
    let sxy = kahan_sum(pts.iter().map(|p| p.2 * p.0 * p.1));
    let det = sw * sxx - sx * sx;
    if det <= 0.0 || !det.is_finite() {
        return Err(Error::FitUnavailable("degenerate lag design".into()));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    let ybar = sy / sw;
    let ss_res = kahan_sum(pts.iter().map(|p| {
        let r = p.1 - (intercept + slope * p.0);
        p.2 * r * r
    }));
    let ss_tot = kahan_sum(pts.iter().map(|p| {
        let r = p.1 - ybar;
        p.2 * r * r
    }));
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let theta2 = -slope;
    Ok(ExpFit {
        theta1: intercept.exp(),
        theta2,
        r2,
        usable_lags: pts.len(),
        low_decay: theta2 <= 0.0,
    })
}

/// Green–Kubo asymptotic variance estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GreenKubo {
    /// `2 ∫₀^∞ cov(s) ds`, trapezoid over the resolved lags plus an
    /// exponential tail `θ₁ e^{-θ₂ L} / θ₂` from the fit.
    pub value: f64,
    /// Set when the tail could not be resolved (no usable fit, or a
    /// non-decaying fit, or a tail exceeding 5% of the total).
    pub tail_warning: bool,
}

/// Integrates the covariance curve to the Green–Kubo variance
/// `σ²_∞ = 2 ∫₀^∞ cov(s) ds`.
pub fn green_kubo_variance(curve: &CovarianceCurve) -> GreenKubo {
    let n = curve.cov.len();
    let mut trapz = 0.5 * (curve.cov[0] + curve.cov[n - 1]);
    trapz += kahan_sum(curve.cov[1..n - 1].iter().copied());
    trapz *= curve.dt;
    let big_l = curve.lags[n - 1];
    match fit_exponential(curve) {
        Ok(fit) if !fit.low_decay => {
            let tail = fit.theta1 * (-fit.theta2 * big_l).exp() / fit.theta2;
            let value = 2.0 * (trapz + tail);
            let frac = if value.abs() > 0.0 { (2.0 * tail / value).abs() } else { 0.0 };
            GreenKubo { value, tail_warning: frac > 0.05 }
        }
        _ => GreenKubo { value: 2.0 * trapz, tail_warning: true },
    }
}

/// Replica-based check that time averages satisfy a CLT with the
/// Green–Kubo variance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CltReport {
    /// Sample variance of the normalized statistics across replicas.
    pub empirical_variance: f64,
    pub green_kubo: GreenKubo,
    /// Anderson–Darling normality p-value of the statistics.
    pub p_value: f64,
    pub replicas: usize,
    /// Mean of the normalized statistics (near zero by construction).
    pub mean_statistic: f64,
}

/// Runs `replicas` independent trajectories, forms the statistic
/// `(∫₀^t f(X_s) ds − c·t)/√t` per replica with `c` the grand mean of
/// `f` across all replicas, and compares the statistic's sample
/// variance against the Green–Kubo estimate from the first replica.
///
/// At least 200 replicas are required for a stable variance and a
/// meaningful normality p-value. A `Zero`-kind or zero-amplitude drift
/// routes through the exact reference sampler.
pub fn clt_check(
    p: &OUParams,
    spec: &DriftSpec,
    cfg: &SimConfig,
    f: impl Fn(f64) -> f64 + Sync,
    replicas: usize,
) -> Result<CltReport> {
    if replicas < 200 {
        return Err(Error::invalid(
            "replicas",
            format!("at least 200 are required for the variance check, got {replicas}"),
        ));
    }
    let unperturbed = spec.amplitude == 0.0;
    let run = |r: usize| -> Result<SamplePath> {
        let rcfg = SimConfig { seed: sub_seed(cfg.seed, r as u64), ..*cfg };
        if unperturbed {
            simulate_reference(p, &rcfg)
        } else {
            simulate_delay(p, spec, &rcfg)
        }
    };
    let span = cfg.horizon - cfg.burn_in;
    let integral_over_span = |path: &SamplePath| -> f64 {
        // Integrate f over [burn_in, horizon]; delay paths carry a
        // context window before burn_in that must be skipped.
        let skip = ((cfg.burn_in - path.start_time) / path.dt).round() as usize;
        let ys: Vec<f64> = path.values[skip..].iter().map(|&x| f(x)).collect();
        let n = ys.len();
        path.dt * (0.5 * (ys[0] + ys[n - 1]) + kahan_sum(ys[1..n - 1].iter().copied()))
    };

    let integrals: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| run(r).map(|path| integral_over_span(&path)))
        .collect::<Result<Vec<f64>>>()?;

    let grand_c = kahan_sum(integrals.iter().copied()) / (replicas as f64 * span);
    let stats: Vec<f64> = integrals
        .iter()
        .map(|i| (i - grand_c * span) / span.sqrt())
        .collect();
    let mean = kahan_sum(stats.iter().copied()) / replicas as f64;
    let var = kahan_sum(stats.iter().map(|s| (s - mean) * (s - mean)))
        / (replicas as f64 - 1.0);

    // Green–Kubo from the first replica's trajectory.
    let gk_path = run(0)?;
    let skip = ((cfg.burn_in - gk_path.start_time) / gk_path.dt).round() as usize;
    let retained = SamplePath::new(
        cfg.burn_in,
        gk_path.dt,
        gk_path.values[skip..].to_vec(),
    )?;
    let max_lag = (10.0 / p.lambda).min(span / 20.0);
    let curve = estimate_covariance(&retained, &f, max_lag)?;
    let gk = green_kubo_variance(&curve);

    Ok(CltReport {
        empirical_variance: var,
        green_kubo: gk,
        p_value: anderson_darling_p(&stats),
        replicas,
        mean_statistic: mean,
    })
}

/// Anderson–Darling normality p-value, mean and variance estimated
/// from the sample (the fully-estimated case, Stephens' adjustment
/// `A*² = A²(1 + 0.75/n + 2.25/n²)`).
///
/// Returns NaN for fewer than 8 points or a degenerate sample.
pub fn anderson_darling_p(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 8 {
        return f64::NAN;
    }
    let nf = n as f64;
    let mean = kahan_sum(samples.iter().copied()) / nf;
    let var = kahan_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (nf - 1.0);
    if !(var > 0.0) {
        return f64::NAN;
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut a2 = 0.0;
    for i in 0..n {
        let phi_lo = normal.cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let phi_hi = normal.cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        a2 += (2.0 * i as f64 + 1.0) * (phi_lo.ln() + (1.0 - phi_hi).ln());
    }
    let a2 = -nf - a2 / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    // Piecewise p-value approximation for the estimated-parameters case.
    if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a > 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::sim::InitialHistory;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn params() -> OUParams {
        OUParams::new(1.0, std::f64::consts::SQRT_2).unwrap()
    }

    #[test]
    fn white_noise_covariance_vanishes_beyond_lag_zero() {
        let mut rng = stream_rng(5, 0);
        let values: Vec<f64> = (0..200_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let path = SamplePath::new(0.0, 0.1, values).unwrap();
        let curve = estimate_covariance(&path, |x| x, 1.0).unwrap();
        assert!((curve.cov[0] - 1.0).abs() < 0.02, "cov(0) = {}", curve.cov[0]);
        for k in 1..curve.cov.len() {
            assert!(
                curve.cov[k].abs() < 4.0 * curve.se[k].max(1e-3),
                "lag {k}: cov {} se {}",
                curve.cov[k],
                curve.se[k]
            );
        }
    }

    #[test]
    fn reference_covariance_decays_at_the_relaxation_rate() {
        let p = params();
        let cfg = SimConfig {
            dt: 0.02,
            horizon: 20_000.0,
            burn_in: 50.0,
            seed: 31,
            initial_history: InitialHistory::StationaryDraw,
        };
        let path = simulate_reference(&p, &cfg).unwrap();
        let curve = estimate_covariance(&path, |x| x, 3.0).unwrap();
        for (i, &lag) in curve.lags.iter().enumerate().step_by(25) {
            let expected = (-p.lambda * lag).exp();
            assert!(
                (curve.cov[i] - expected).abs() < 5.0 * curve.se[i].max(5e-3),
                "lag {lag}: cov {} vs {expected} (se {})",
                curve.cov[i],
                curve.se[i]
            );
        }
        let fit = fit_exponential(&curve).unwrap();
        assert!((fit.theta2 - 1.0).abs() < 0.12, "theta2 = {}", fit.theta2);
        assert!((fit.theta1 - 1.0).abs() < 0.08, "theta1 = {}", fit.theta1);
        assert!(fit.r2 > 0.9, "r2 = {}", fit.r2);
    }

    #[test]
    fn fit_recovers_an_exact_exponential() {
        let lags: Vec<f64> = (0..=40).map(|k| 0.1 * k as f64).collect();
        let cov: Vec<f64> = lags.iter().map(|l| 2.0 * (-3.0 * l).exp()).collect();
        let se = vec![1e-12; lags.len()];
        let curve = CovarianceCurve { lags: lags.clone(), cov: cov.clone(), se, dt: 0.1 };
        let fit = fit_exponential(&curve).unwrap();
        assert_relative_eq!(fit.theta1, 2.0, max_relative = 1e-9);
        assert_relative_eq!(fit.theta2, 3.0, max_relative = 1e-9);
        assert_relative_eq!(fit.r2, 1.0, max_relative = 1e-9);
        assert!(!fit.low_decay);
        // Exact (se = 0) data falls back to uniform weights.
        let curve0 = CovarianceCurve { lags, cov, se: vec![0.0; 41], dt: 0.1 };
        let fit0 = fit_exponential(&curve0).unwrap();
        assert_relative_eq!(fit0.theta2, 3.0, max_relative = 1e-9);
    }

    #[test]
    fn flat_curve_is_flagged_as_low_decay() {
        let lags: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
        let curve = CovarianceCurve {
            cov: vec![1.0; lags.len()],
            se: vec![0.0; lags.len()],
            lags,
            dt: 0.5,
        };
        let fit = fit_exponential(&curve).unwrap();
        assert!(fit.low_decay);
        let gk = green_kubo_variance(&curve);
        assert!(gk.tail_warning);
    }

    #[test]
    fn too_few_usable_lags_is_an_error() {
        let curve = CovarianceCurve {
            lags: vec![0.0, 0.1, 0.2, 0.3],
            cov: vec![1.0, 0.001, 0.001, 0.001],
            se: vec![0.01, 0.01, 0.01, 0.01],
            dt: 0.1,
        };
        assert!(matches!(fit_exponential(&curve), Err(Error::FitUnavailable(_))));
    }

    #[test]
    fn green_kubo_integrates_the_unit_exponential_to_two() {
        let dt = 0.01;
        let lags: Vec<f64> = (0..=500).map(|k| dt * k as f64).collect();
        let cov: Vec<f64> = lags.iter().map(|l| (-l).exp()).collect();
        let curve = CovarianceCurve { cov, se: vec![1e-13; lags.len()], lags, dt };
        let gk = green_kubo_variance(&curve);
        assert_relative_eq!(gk.value, 2.0, max_relative = 1e-4);
        assert!(!gk.tail_warning);
    }

    #[test]
    fn path_too_short_for_requested_lag() {
        let path = SamplePath::new(0.0, 0.1, vec![0.0; 100]).unwrap();
        assert!(matches!(
            estimate_covariance(&path, |x| x, 5.0),
            Err(Error::PathTooShort(_))
        ));
    }

    #[test]
    fn clt_variance_matches_green_kubo_for_the_reference_process() {
        let p = params();
        let spec = DriftSpec::zero(1.0);
        let cfg = SimConfig {
            dt: 0.05,
            horizon: 150.0,
            burn_in: 50.0,
            seed: 41,
            initial_history: InitialHistory::StationaryDraw,
        };
        let report = clt_check(&p, &spec, &cfg, |x| x, 300).unwrap();
        // True asymptotic variance is 2 ∫₀^∞ e^{-s} ds = 2.
        assert!(
            (report.empirical_variance - 2.0).abs() < 0.6,
            "empirical variance {}",
            report.empirical_variance
        );
        // The Green-Kubo value comes from a single replica of span 100,
        // where covariance noise is correlated across lags; the spread of
        // the integral is of order one, so only a sanity window is stable.
        assert!(
            report.green_kubo.value > 0.8 && report.green_kubo.value < 4.0,
            "green-kubo {}",
            report.green_kubo.value
        );
        assert!(report.mean_statistic.abs() < 1e-10);
        assert!(report.p_value > 1e-3, "p = {}", report.p_value);
    }

    #[test]
    fn clt_variance_scales_with_the_relaxation_rate() {
        // λ = 2 halves both the stationary variance relative to σ²/2
        // and the correlation time: σ²_∞ = 2·(1/2)·(1/2) = 1/2 at σ=√2.
        let p = OUParams::new(2.0, std::f64::consts::SQRT_2).unwrap();
        let spec = DriftSpec::zero(1.0);
        let cfg = SimConfig {
            dt: 0.05,
            horizon: 125.0,
            burn_in: 25.0,
            seed: 42,
            initial_history: InitialHistory::StationaryDraw,
        };
        let report = clt_check(&p, &spec, &cfg, |x| x, 300).unwrap();
        assert!(
            (report.empirical_variance - 0.5).abs() < 0.15,
            "empirical variance {}",
            report.empirical_variance
        );
    }

    #[test]
    fn zero_observable_gives_zero_statistics() {
        let p = params();
        let spec = DriftSpec::zero(1.0);
        let cfg = SimConfig {
            dt: 0.05,
            horizon: 80.0,
            burn_in: 20.0,
            seed: 43,
            initial_history: InitialHistory::StationaryDraw,
        };
        let report = clt_check(&p, &spec, &cfg, |_| 0.0, 200).unwrap();
        assert_eq!(report.empirical_variance, 0.0);
        assert!(report.p_value.is_nan());
    }

    #[test]
    fn replica_floor_is_enforced() {
        let p = params();
        let spec = DriftSpec::zero(1.0);
        let cfg = SimConfig {
            dt: 0.05,
            horizon: 80.0,
            burn_in: 20.0,
            seed: 44,
            initial_history: InitialHistory::StationaryDraw,
        };
        assert!(clt_check(&p, &spec, &cfg, |x| x, 199).is_err());
    }

    #[test]
    fn anderson_darling_separates_normal_from_exponential() {
        let mut rng = stream_rng(6, 0);
        let normal: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(anderson_darling_p(&normal) > 1e-3);
        let expo: Vec<f64> = (0..500)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        assert!(anderson_darling_p(&expo) < 1e-2);
        assert!(anderson_darling_p(&[1.0; 20]).is_nan());
        assert!(anderson_darling_p(&[1.0, 2.0]).is_nan());
    }

    proptest! {
        // Empirical autocovariance is invariant under time reversal of
        // the path (the defining sums are identical term for term).
        #[test]
        fn prop_covariance_time_reversal(seed in 0u64..500) {
            let mut rng = stream_rng(seed, 2);
            let values: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut reversed = values.clone();
            reversed.reverse();
            let fwd = estimate_covariance(
                &SamplePath::new(0.0, 0.1, values).unwrap(), |x| x, 10.0).unwrap();
            let bwd = estimate_covariance(
                &SamplePath::new(0.0, 0.1, reversed).unwrap(), |x| x, 10.0).unwrap();
            for k in 0..fwd.cov.len() {
                prop_assert!((fwd.cov[k] - bwd.cov[k]).abs() <= 1e-10 * (1.0 + fwd.cov[k].abs()));
            }
        }

        // Scaling the observable by α scales cov and se by α².
        #[test]
        fn prop_covariance_quadratic_scaling(seed in 0u64..500, alpha in 0.1f64..10.0) {
            let mut rng = stream_rng(seed, 3);
            let values: Vec<f64> = (0..3000).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let path = SamplePath::new(0.0, 0.1, values).unwrap();
            let base = estimate_covariance(&path, |x| x, 5.0).unwrap();
            let scaled = estimate_covariance(&path, |x| alpha * x, 5.0).unwrap();
            for k in 0..base.cov.len() {
                prop_assert!(
                    (scaled.cov[k] - alpha * alpha * base.cov[k]).abs()
                        <= 1e-10 * (1.0 + scaled.cov[k].abs()));
                prop_assert!(
                    (scaled.se[k] - alpha * alpha * base.se[k]).abs()
                        <= 1e-10 * (1.0 + scaled.se[k].abs()));
            }
        }
    }
}
