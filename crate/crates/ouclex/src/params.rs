//! Core data types shared across the crate.

use crate::error::Error;
use crate::Result;
use serde::Serialize;

/// Parameters of the reference Ornstein-Uhlenbeck diffusion
/// `dy_t = -lambda * y_t dt + sigma dB_t`.
///
/// The invariant measure is `mu = N(0, sigma^2 / (2 lambda))`, and the
/// process is reversible with respect to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OUParams {
    /// Mean-reversion rate, strictly positive, units 1/time.
    pub lambda: f64,
    /// Diffusion coefficient, strictly positive.
    pub sigma: f64,
}

impl OUParams {
    pub fn new(lambda: f64, sigma: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid("lambda", format!("must be finite and > 0, got {lambda}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be finite and > 0, got {sigma}")));
        }
        Ok(OUParams { lambda, sigma })
    }

    /// Variance of the invariant measure: `sigma^2 / (2 lambda)`.
    pub fn invariant_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.lambda)
    }

    /// Standard deviation of the invariant measure.
    pub fn invariant_std(&self) -> f64 {
        self.invariant_variance().sqrt()
    }
}

/// A uniformly discretized trajectory segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    /// Time of `values[0]`.
    pub start_time: f64,
    /// Grid step, strictly positive.
    pub dt: f64,
    /// Ordered state values; length >= 2, all finite.
    pub values: Vec<f64>,
}

impl SamplePath {
    pub fn new(start_time: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be finite and > 0, got {dt}")));
        }
        if values.len() < 2 {
            return Err(Error::PathTooShort(format!(
                "a path needs at least 2 values, got {}",
                values.len()
            )));
        }
        if !start_time.is_finite() {
            return Err(Error::invalid("start_time", "must be finite"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid("values", format!("non-finite entry {bad}")));
        }
        Ok(SamplePath { start_time, dt, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of the last sample: `start_time + (len - 1) * dt`.
    pub fn end_time(&self) -> f64 {
        self.start_time + (self.values.len() - 1) as f64 * self.dt
    }

    /// Time of the `i`-th sample.
    pub fn time_at(&self, i: usize) -> f64 {
        self.start_time + i as f64 * self.dt
    }

    /// Writes the path as CSV with header `t,x` and 17-significant-digit
    /// scientific formatting.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.time_at(i), v)?;
        }
        Ok(())
    }
}

/// A Monte Carlo estimate: sample mean, standard error of the mean, and
/// sample count.
///
/// Deterministic (quadrature) evaluations reuse this type with
/// `std_error = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

impl MCEstimate {
    /// Reduces raw sample values to mean and standard error.
    ///
    /// Uses compensated summation so the reduction is independent of how
    /// the samples were produced (the caller guarantees their order).
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("samples", "need at least 2 samples"));
        }
        let n = samples.len() as f64;
        let mean = kahan_sum(samples.iter().copied()) / n;
        let ss = kahan_sum(samples.iter().map(|&x| {
            let d = x - mean;
            d * d
        }));
        let var = ss / (n - 1.0);
        Ok(MCEstimate {
            mean,
            std_error: (var / n).sqrt(),
            n: samples.len() as u64,
        })
    }
}

/// Compensated (Kahan) summation.
pub(crate) fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ou_params_validation() {
        assert!(OUParams::new(1.0, 1.0).is_ok());
        assert!(OUParams::new(0.0, 1.0).is_err());
        assert!(OUParams::new(-1.0, 1.0).is_err());
        assert!(OUParams::new(1.0, 0.0).is_err());
        assert!(OUParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn invariant_variance_formula() {
        let p = OUParams::new(1.0, std::f64::consts::SQRT_2).unwrap();
        assert_relative_eq!(p.invariant_variance(), 1.0, max_relative = 1e-15);
        let p = OUParams::new(2.0, 1.0).unwrap();
        assert_relative_eq!(p.invariant_variance(), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn sample_path_end_time_and_csv() {
        let path = SamplePath::new(-1.0, 0.5, vec![1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(path.end_time(), 0.0, epsilon = 1e-15);
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x"));
        assert!(lines.next().unwrap().starts_with("-1.0000000000000000e0,"));
    }

    #[test]
    fn sample_path_rejects_degenerate_input() {
        assert!(SamplePath::new(0.0, 0.0, vec![1.0, 2.0]).is_err());
        assert!(SamplePath::new(0.0, 0.1, vec![1.0]).is_err());
        assert!(SamplePath::new(0.0, 0.1, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn mc_estimate_matches_direct_formulas() {
        let samples = [1.0, 2.0, 3.0, 4.0];
        let est = MCEstimate::from_samples(&samples).unwrap();
        assert_relative_eq!(est.mean, 2.5, max_relative = 1e-15);
        // Sample variance 5/3, SE = sqrt(5/3/4).
        assert_relative_eq!(est.std_error, (5.0 / 3.0 / 4.0f64).sqrt(), max_relative = 1e-14);
        assert_eq!(est.n, 4);
    }
}
