//! Bounded measurable delay-drift functionals.
//!
//! A drift acts on the trajectory window `(u_s)_{s ∈ [t-t0, t]}` and is
//! normalized so that its `amplitude` field **is** the sup-norm bound
//! `‖b‖∞`: integral kinds are divided by the window span before scaling,
//! indicator and sign kinds take values in `{-1, 0, 1}` before scaling.
//! This makes condition (c) of the bound calculus checkable directly
//! from the spec, with no per-drift functional analysis.

use crate::error::Error;
use crate::params::SamplePath;
use crate::Result;
use serde::{Deserialize, Serialize};

/// The registry of window functionals.
///
/// With `x = u_t` (current state) and `s` ranging over the window:
///
/// * `Zero` — the unperturbed reference dynamics.
/// * `WindowIntegralSign` — `(1/t0) ∫ sign(x - u_s) ds`, the normalized
///   integral kind with `f(x, y) = sign(x - y)`.
/// * `OccupationTime` — `(1/t0) ∫ 1_{u_s ∈ [lo, hi]} ds`, the occupation
///   time of a set; `[lo, hi] = (-∞, ∞)` yields the constant drift
///   `b ≡ amplitude` (useful as a test kind with a closed form).
/// * `LaggedSign` — `sign(u_{t-t0})`, a function of the lagged state.
/// * `WindowIndicator` — `1` when the whole window stays in `[lo, hi]`,
///   else `0` (the indicator of a path set).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DriftKind {
    Zero,
    WindowIntegralSign,
    OccupationTime { lo: f64, hi: f64 },
    LaggedSign,
    WindowIndicator { lo: f64, hi: f64 },
}

/// A named bounded drift with delay horizon `t0` and sup-norm
/// `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Delay horizon, strictly positive, units time.
    pub t0: f64,
    /// `‖b‖∞`; every evaluation satisfies `|b| <= amplitude`.
    pub amplitude: f64,
}

impl DriftSpec {
    pub fn new(kind: DriftKind, t0: f64, amplitude: f64) -> Result<Self> {
        if !(t0.is_finite() && t0 > 0.0) {
            return Err(Error::invalid("t0", format!("must be finite and > 0, got {t0}")));
        }
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::invalid(
                "amplitude",
                format!("must be finite and >= 0, got {amplitude}"),
            ));
        }
        if let DriftKind::OccupationTime { lo, hi } | DriftKind::WindowIndicator { lo, hi } = kind {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(Error::invalid("kind", format!("set [{lo}, {hi}] is empty or NaN")));
            }
        }
        Ok(DriftSpec { kind, t0, amplitude })
    }

    /// Zero drift with a placeholder horizon.
    pub fn zero(t0: f64) -> Self {
        DriftSpec { kind: DriftKind::Zero, t0, amplitude: 0.0 }
    }

    /// Number of grid steps spanned by the window at step `dt`.
    pub fn window_steps(&self, dt: f64) -> Result<usize> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
        }
        if dt > self.t0 {
            return Err(Error::Domain(format!("dt = {dt} exceeds the delay horizon t0 = {}", self.t0)));
        }
        let w = (self.t0 / dt).round();
        if (w * dt - self.t0).abs() > dt {
            return Err(Error::Domain(format!(
                "window must span t0 = {} within one step of dt = {dt}",
                self.t0
            )));
        }
        Ok(w as usize)
    }
}

/// `sign` with the measurable convention `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates the drift on a window covering `[t - t0, t]`.
///
/// `window.values[0]` is `u_{t-t0}` and the last entry is `u_t`; the
/// window must span `t0` within one `dt`. Integral kinds use the
/// trapezoid rule over the actual span `W·dt`.
pub fn drift_eval(spec: &DriftSpec, window: &SamplePath) -> Result<f64> {
    let w = spec.window_steps(window.dt)?;
    if window.values.len() < w + 1 {
        return Err(Error::PathTooShort(format!(
            "window has {} values but t0/dt needs {}",
            window.values.len(),
            w + 1
        )));
    }
    let tail = &window.values[window.values.len() - (w + 1)..];
    Ok(eval_window(spec, tail))
}

/// Core evaluation on exactly `W+1` values (`tail[0] = u_{t-t0}`,
/// `tail[W] = u_t`). Shared by the batch and streaming paths so the two
/// agree bit-for-bit.
fn eval_window(spec: &DriftSpec, tail: &[f64]) -> f64 {
    let w = tail.len() - 1;
    let value = match spec.kind {
        DriftKind::Zero => 0.0,
        DriftKind::WindowIntegralSign => {
            let x = tail[w];
            // Trapezoid of sign(x - u_s); the right endpoint is
            // sign(0) = 0 identically.
            let mut acc = 0.5 * sign(x - tail[0]);
            for v in &tail[1..w] {
                acc += sign(x - v);
            }
            acc / w as f64
        }
        DriftKind::OccupationTime { lo, hi } => {
            let ind = |v: f64| if (lo..=hi).contains(&v) { 1.0 } else { 0.0 };
            let mut acc = 0.5 * (ind(tail[0]) + ind(tail[w]));
            for v in &tail[1..w] {
                acc += ind(*v);
            }
            acc / w as f64
        }
        DriftKind::LaggedSign => sign(tail[0]),
        DriftKind::WindowIndicator { lo, hi } => {
            if tail.iter().all(|v| (lo..=hi).contains(v)) {
                1.0
            } else {
                0.0
            }
        }
    };
    let b = spec.amplitude * value;
    debug_assert!(
        b.abs() <= spec.amplitude * (1.0 + 1e-12),
        "drift magnitude {b} exceeds amplitude {}",
        spec.amplitude
    );
    b.clamp(-spec.amplitude, spec.amplitude)
}

/// Streaming evaluator: push states in time order, read the drift at the
/// current endpoint once the window is full.
///
/// Counting kinds (`OccupationTime`, `WindowIndicator`, `LaggedSign`)
/// update in O(1) per step with exact integer bookkeeping;
/// `WindowIntegralSign` re-evaluates its O(W) trapezoid because the
/// integrand depends on the moving endpoint.
#[derive(Debug, Clone)]
pub struct DriftEvaluator {
    spec: DriftSpec,
    /// Ring buffer of the last `W+1` values.
    ring: Vec<f64>,
    /// Index of the oldest entry once the ring is full.
    head: usize,
    filled: usize,
    /// Running count of in-set entries (counting kinds).
    in_set: usize,
}

impl DriftEvaluator {
    pub fn new(spec: &DriftSpec, dt: f64) -> Result<Self> {
        let w = spec.window_steps(dt)?;
        Ok(DriftEvaluator {
            spec: *spec,
            ring: vec![0.0; w + 1],
            head: 0,
            filled: 0,
            in_set: 0,
        })
    }

    /// Window length in values (`W + 1`).
    pub fn window_len(&self) -> usize {
        self.ring.len()
    }

    pub fn reset(&mut self) {
        self.head = 0;
        self.filled = 0;
        self.in_set = 0;
    }

    fn in_set(&self, v: f64) -> bool {
        match self.spec.kind {
            DriftKind::OccupationTime { lo, hi } | DriftKind::WindowIndicator { lo, hi } => {
                (lo..=hi).contains(&v)
            }
            _ => false,
        }
    }

    /// Pushes `u_t`; returns the drift at `t` once `W+1` values are
    /// buffered, `None` while the window is still priming.
    pub fn push(&mut self, v: f64) -> Option<f64> {
        let len = self.ring.len();
        if self.filled == len {
            // Evict the oldest entry.
            if self.in_set(self.ring[self.head]) {
                self.in_set -= 1;
            }
        } else {
            self.filled += 1;
        }
        self.ring[self.head] = v;
        if self.in_set(v) {
            self.in_set += 1;
        }
        self.head = (self.head + 1) % len;
        if self.filled < len {
            return None;
        }
        Some(self.current())
    }

    /// Drift at the newest buffered state; callable once full.
    pub fn current(&self) -> f64 {
        let len = self.ring.len();
        debug_assert_eq!(self.filled, len, "window not yet primed");
        let w = len - 1;
        let oldest = self.head; // head points at the next overwrite = oldest
        let newest = (self.head + len - 1) % len;
        let at = |i: usize| self.ring[(oldest + i) % len];
        let spec = &self.spec;
        let value = match spec.kind {
            DriftKind::Zero => 0.0,
            DriftKind::WindowIntegralSign => {
                let x = self.ring[newest];
                let mut acc = 0.5 * sign(x - at(0));
                for i in 1..w {
                    acc += sign(x - at(i));
                }
                acc / w as f64
            }
            DriftKind::OccupationTime { lo, hi } => {
                let ind = |v: f64| if (lo..=hi).contains(&v) { 1.0 } else { 0.0 };
                // Trapezoid from the exact running count: interior sum
                // equals count minus half-weighted endpoints.
                let acc = self.in_set as f64 - 0.5 * (ind(at(0)) + ind(at(w)));
                acc / w as f64
            }
            DriftKind::LaggedSign => sign(at(0)),
            DriftKind::WindowIndicator { .. } => {
                if self.in_set == len {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let b = spec.amplitude * value;
        debug_assert!(b.abs() <= spec.amplitude * (1.0 + 1e-12));
        b.clamp(-spec.amplitude, spec.amplitude)
    }
}
