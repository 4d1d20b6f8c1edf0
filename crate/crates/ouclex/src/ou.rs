//! Closed-form quantities of the one-dimensional Ornstein-Uhlenbeck
//! reference process, exact samplers, and independent quadrature oracles.
//!
//! The reference dynamics are `dy_t = -lambda y_t dt + sigma dB_t`, whose
//! invariant measure is `mu = N(0, sigma^2 / 2 lambda)`. All densities
//! here are taken **relative to mu**, not Lebesgue measure: the
//! transition kernel is
//!
//! ```text
//! p(t,x,y) = (1 - e^{-2λt})^{-1/2}
//!            · exp( -λ/(σ²(1-e^{-2λt})) · ((x²+y²) e^{-2λt} - 2xy e^{-λt}) ),
//! ```
//!
//! which is symmetric in `(x, y)` (reversibility) and tends to 1 as
//! `t → ∞`.

use crate::error::Error;
use crate::params::{OUParams, SamplePath};
use crate::quad::GaussHermite;
use crate::Result;
use rand::Rng;
use rand_distr::StandardNormal;

/// Density of the invariant measure `N(0, sigma^2/2 lambda)` at `x`,
/// relative to Lebesgue measure:
/// `sqrt(lambda / (pi sigma^2)) * exp(-lambda x^2 / sigma^2)`.
pub fn invariant_density(x: f64, p: &OUParams) -> f64 {
    let l = p.lambda;
    let s2 = p.sigma * p.sigma;
    (l / (std::f64::consts::PI * s2)).sqrt() * (-l * x * x / s2).exp()
}

/// Transition density of the reference process relative to `mu`.
///
/// Errors if `t <= 0`.
pub fn transition_density(t: f64, x: f64, y: f64, p: &OUParams) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("transition density needs t > 0, got {t}")));
    }
    let e = (-p.lambda * t).exp();
    let q = e * e;
    let denom = p.sigma * p.sigma * (1.0 - q);
    let expo = -p.lambda * ((x * x + y * y) * q - 2.0 * x * y * e) / denom;
    Ok(expo.exp() / (1.0 - q).sqrt())
}

/// Closed form of the `L^k(mu ⊗ mu)` norm `I_k(t) = ∬ p(t,x,y)^k dmu dmu`:
///
/// ```text
/// I_k(t) = (1-q)^{1-k/2} / sqrt((1+(k-1)q)^2 - k^2 q),   q = e^{-2λt},
/// ```
///
/// computed through the equivalent factorization
/// `(1+(k-1)q)^2 - k^2 q = (1-q)(1-(k-1)^2 q)`, so the integral is finite
/// exactly when `(k-1)^2 q < 1`, i.e. `λt > ln(k-1)`. Divergence is
/// reported as `f64::INFINITY`, a valid flagged return.
pub fn lk_norm_closed(t: f64, k: u32, p: &OUParams) -> f64 {
    assert!(t > 0.0, "lk_norm_closed needs t > 0");
    assert!(k >= 1, "lk_norm_closed needs k >= 1");
    if k == 1 {
        return 1.0;
    }
    let q = (-2.0 * p.lambda * t).exp();
    let km1 = (k - 1) as f64;
    let tail = 1.0 - km1 * km1 * q;
    if tail <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 - q).powf((1.0 - k as f64) / 2.0) / tail.sqrt()
}

/// Gauss–Hermite estimate of `∬ p(t,x,y)^k dmu dmu`.
///
/// `reliable` is false when the closed form says the integral diverges;
/// the returned number is then a meaningless finite quadrature artifact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureEstimate {
    pub value: f64,
    pub reliable: bool,
}

/// Independent quadrature oracle for [`lk_norm_closed`].
pub fn lk_norm_quadrature(t: f64, k: u32, p: &OUParams, nodes: usize) -> Result<QuadratureEstimate> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("lk_norm_quadrature needs t > 0, got {t}")));
    }
    if k < 1 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    if nodes < 16 {
        return Err(Error::invalid("nodes", format!("need >= 16 nodes, got {nodes}")));
    }
    let gh = GaussHermite::new(nodes)?;
    let s = p.invariant_std();
    let ki = k as i32;
    let value = gh.integrate_gaussian2(s, |x, y| {
        transition_density(t, x, y, p).expect("t > 0 checked").powi(ki)
    });
    Ok(QuadratureEstimate {
        value,
        reliable: lk_norm_closed(t, k, p).is_finite(),
    })
}

/// The hypercontractivity constant
///
/// ```text
/// M_δ = sup_{a ≥ δ} ‖p(a,·,·)‖_{L^8(mu⊗mu)} ∨ 1
///     = (1-q)^{-7/16} (1-49q)^{-1/16} ∨ 1,   q = e^{-2λδ},
/// ```
///
/// where the supremum is attained at `a = δ` because the norm is
/// decreasing in `a` (verified in tests on a grid rather than trusted).
/// Returns `f64::INFINITY` when `λδ ≤ ln 7`, the finiteness threshold of
/// the `L^8` norm.
pub fn m_delta(delta: f64, p: &OUParams) -> f64 {
    assert!(delta > 0.0, "m_delta needs delta > 0");
    let q = (-2.0 * p.lambda * delta).exp();
    let tail = 1.0 - 49.0 * q;
    if tail <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - q).powf(-7.0 / 16.0) * tail.powf(-1.0 / 16.0)).max(1.0)
}

/// Semigroup-consistency residual
/// `∫ p(s,x,z) p(t,z,y) mu(dz) − p(s+t,x,y)`, evaluated by Gauss–Hermite.
pub fn chapman_kolmogorov_check(
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    p: &OUParams,
    nodes: usize,
) -> Result<f64> {
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::Domain(format!("chapman_kolmogorov_check needs s, t > 0, got ({s}, {t})")));
    }
    let gh = GaussHermite::new(nodes)?;
    let sd = p.invariant_std();
    let composed = gh.integrate_gaussian(sd, |z| {
        transition_density(s, x, z, p).unwrap() * transition_density(t, z, y, p).unwrap()
    });
    Ok(composed - transition_density(s + t, x, y, p)?)
}

/// Stationary autocovariance of the reference process:
/// `cov(y_0, y_s) = (sigma^2 / 2 lambda) e^{-lambda s}`.
pub fn stationary_cov(s: f64, p: &OUParams) -> f64 {
    assert!(s >= 0.0, "stationary_cov needs s >= 0");
    p.invariant_variance() * (-p.lambda * s).exp()
}

/// Exact one-step sampler of the transition law:
/// `y_t | y_0 = x  ~  N(x e^{-λt}, (σ²/2λ)(1 − e^{-2λt}))`.
pub fn ou_exact_step<R: Rng + ?Sized>(x: f64, t: f64, p: &OUParams, rng: &mut R) -> f64 {
    assert!(t >= 0.0, "ou_exact_step needs t >= 0");
    if t == 0.0 {
        return x;
    }
    let e = (-p.lambda * t).exp();
    let sd = (p.invariant_variance() * (1.0 - e * e)).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    x * e + sd * z
}

/// Precomputed per-step coefficients for sampling reference-process
/// bridges on `[0, a]` with step `dt`.
///
/// Sequential Gaussian conditioning: given the current value `v` at time
/// `t_k` and the pinned endpoint `y` at time `a`, the next value is
///
/// ```text
/// z ~ N( (v m₁ V₂ + y m₂ V₁) / (V₂ + m₂² V₁),  V₁ V₂ / (V₂ + m₂² V₁) ),
/// ```
///
/// with `m₁ = e^{-λ dt}`, `V₁ = s²(1-e^{-2λ dt})` (one step) and
/// `m₂ = e^{-λ(R-dt)}`, `V₂ = s²(1-e^{-2λ(R-dt)})` (remaining horizon
/// `R = a - t_k`). This is exact in distribution; the only bridge error
/// is statistical.
#[derive(Debug, Clone)]
pub struct BridgeStepper {
    /// Number of steps; the path has `steps + 1` values.
    steps: usize,
    dt: f64,
    /// Coefficient of the current value in the conditional mean.
    coef_cur: Vec<f64>,
    /// Coefficient of the terminal value in the conditional mean.
    coef_end: Vec<f64>,
    /// Conditional standard deviation.
    sd: Vec<f64>,
}

impl BridgeStepper {
    pub fn new(a: f64, dt: f64, p: &OUParams) -> Result<Self> {
        if !(a > 0.0 && dt > 0.0) {
            return Err(Error::Domain(format!("bridge needs a > 0 and dt > 0, got ({a}, {dt})")));
        }
        if dt > a {
            return Err(Error::Domain(format!("bridge step dt = {dt} exceeds span a = {a}")));
        }
        let steps_f = a / dt;
        let steps = steps_f.round() as usize;
        if steps < 1 || (steps_f - steps as f64).abs() > 1e-6 {
            return Err(Error::Domain(format!("dt = {dt} must divide a = {a} within rounding")));
        }
        let s2 = p.invariant_variance();
        let m1 = (-p.lambda * dt).exp();
        let v1 = s2 * (1.0 - m1 * m1);
        let mut coef_cur = Vec::with_capacity(steps);
        let mut coef_end = Vec::with_capacity(steps);
        let mut sd = Vec::with_capacity(steps);
        // The k-th transition moves from t_k to t_{k+1}; the last one is
        // pinned to the endpoint exactly.
        for k in 0..steps {
            let remaining = (steps - k) as f64 * dt;
            if k == steps - 1 {
                coef_cur.push(0.0);
                coef_end.push(1.0);
                sd.push(0.0);
                continue;
            }
            let m2 = (-p.lambda * (remaining - dt)).exp();
            let v2 = s2 * (1.0 - m2 * m2);
            let denom = v2 + m2 * m2 * v1;
            coef_cur.push(m1 * v2 / denom);
            coef_end.push(m2 * v1 / denom);
            sd.push((v1 * v2 / denom).sqrt());
        }
        Ok(BridgeStepper { steps, dt, coef_cur, coef_end, sd })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Samples one bridge from `x` to `y` into `out` (cleared first);
    /// `out` ends with `steps + 1` values, `out[0] = x`, `out[last] = y`.
    pub fn sample_into<R: Rng + ?Sized>(&self, x: f64, y: f64, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.steps + 1);
        out.push(x);
        let mut v = x;
        for k in 0..self.steps {
            let mean = self.coef_cur[k] * v + self.coef_end[k] * y;
            let z: f64 = rng.sample(StandardNormal);
            v = mean + self.sd[k] * z;
            out.push(v);
        }
        // Pin the endpoint exactly (the last step has sd = 0 already;
        // this removes even representation noise).
        *out.last_mut().expect("non-empty") = y;
    }
}

/// Samples one reference-process bridge on `[0, a]` from `x` to `y`.
///
/// The finite-dimensional marginals equal those of the reference process
/// conditioned on both endpoints.
pub fn bridge_sample<R: Rng + ?Sized>(
    x: f64,
    y: f64,
    a: f64,
    dt: f64,
    p: &OUParams,
    rng: &mut R,
) -> Result<SamplePath> {
    let stepper = BridgeStepper::new(a, dt, p)?;
    let mut values = Vec::new();
    stepper.sample_into(x, y, rng, &mut values);
    SamplePath::new(0.0, dt, values)
}

/// Conditional mean and variance of the bridge marginal at interior time
/// `t`, derived by conditioning the joint normal `(y_t, y_a)` given
/// `y_0 = x` on `y_a = y`:
///
/// ```text
/// mean = x e^{-λt} + e^{-λ(a-t)} (1-e^{-2λt})/(1-e^{-2λa}) (y - x e^{-λa}),
/// var  = s² (1-e^{-2λt}) (1 - e^{-2λ(a-t)} (1-e^{-2λt})/(1-e^{-2λa})).
/// ```
///
/// Used as the independent oracle for the sequential sampler.
pub fn bridge_marginal_moments(x: f64, y: f64, a: f64, t: f64, p: &OUParams) -> (f64, f64) {
    assert!(t > 0.0 && t < a, "interior time required");
    let s2 = p.invariant_variance();
    let qt = 1.0 - (-2.0 * p.lambda * t).exp();
    let qa = 1.0 - (-2.0 * p.lambda * a).exp();
    let ratio = (-p.lambda * (a - t)).exp() * qt / qa;
    let mean = x * (-p.lambda * t).exp() + ratio * (y - x * (-p.lambda * a).exp());
    let var = s2 * qt * (1.0 - (-p.lambda * (a - t)).exp() * ratio);
    (mean, var)
}
