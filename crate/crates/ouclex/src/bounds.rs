//! Explicit bound calculus over the hypothesis constants
//! `(delta, C_P, M_delta)`.
//!
//! Every quantity here is an explicit closed form:
//!
//! * `beta_delta(t) = 2 M e^{-(t-2δ)/C_P}` for `t ≥ 2δ` — the decay
//!   envelope of `‖p(t,·,·) − 1‖`.
//! * `B_j ≤ √(8!) e² M^{7/2} (a‖b‖∞²)²` and
//!   `C_j ≤ M⁴ (4 + 2M⁴(4 + β⁴)) β⁴` with `β = beta_delta(a)` — the two
//!   per-block contributions to the cluster estimate.
//! * `a_C(ε)` solves `C_j(a) = ε⁴/16` exactly:
//!   `a_C(ε) = 2δ − (C_P/4) ln[(1/16M⁴)(2 + 1/M⁴)(√(1 + ε⁴/(32(1+2M⁴)²)) − 1)]`.
//! * `a_ε = max(a_C(ε), 2δ)`,
//!   `b(ε) = (ε/(2√e (8!)^{1/8} M^{7/8}) ∧ 1/√8) / √a_ε`,
//!   `ε₀ = 2^{5/2} M² (8M⁸ + 2M⁴ + 1)^{1/4} ∧ √(e/2) (8!)^{1/8} M^{7/8}`.
//!
//! With these choices, `8 B_j + 8 C_j ≤ ε⁴` holds at `(a, ‖b‖∞) =
//! (a_ε, b(ε))` for every `ε ≤ ε₀` — the cluster-weight estimate
//! `|Γ_τ| ≤ ε^{|τ|}`.

use crate::error::Error;
use crate::ou;
use crate::params::OUParams;
use crate::Result;
use serde::Serialize;

/// The constants through which every bound formula is expressed.
///
/// `delta` is the hypercontractivity onset time, `c_p` the Poincaré
/// constant of the invariant measure, and `m_delta ≥ 1` the associated
/// `L^8` bound on the transition kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisConstants {
    pub delta: f64,
    pub c_p: f64,
    pub m_delta: f64,
}

impl HypothesisConstants {
    pub fn new(delta: f64, c_p: f64, m_delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid("delta", format!("must be finite and > 0, got {delta}")));
        }
        if !(c_p.is_finite() && c_p > 0.0) {
            return Err(Error::invalid("c_p", format!("must be finite and > 0, got {c_p}")));
        }
        if !(m_delta.is_finite() && m_delta >= 1.0) {
            return Err(Error::invalid(
                "m_delta",
                format!("must be finite and >= 1, got {m_delta}"),
            ));
        }
        Ok(HypothesisConstants { delta, c_p, m_delta })
    }

    /// Builds the constants realized by the reference OU process:
    /// `C_P = 1/(2λ)` and `M_δ` from its closed form. Errors when
    /// `λ δ ≤ ln 7`, the finiteness threshold of `M_δ`.
    pub fn from_ou(delta: f64, p: &OUParams) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid("delta", format!("must be finite and > 0, got {delta}")));
        }
        let m = ou::m_delta(delta, p);
        if !m.is_finite() {
            return Err(Error::Domain(format!(
                "m_delta diverges: delta must exceed ln(7)/lambda = {}, got {delta}",
                7.0f64.ln() / p.lambda
            )));
        }
        HypothesisConstants::new(delta, poincare_constant(p), m)
    }
}

/// Poincaré constant of the OU invariant measure: `C_P = 1/(2λ)`.
pub fn poincare_constant(p: &OUParams) -> f64 {
    1.0 / (2.0 * p.lambda)
}

/// Decay envelope `β_δ(t) = 2 M_δ e^{-(t-2δ)/C_P}`, defined for `t ≥ 2δ`.
pub fn beta_delta(t: f64, h: &HypothesisConstants) -> Result<f64> {
    if t < 2.0 * h.delta {
        return Err(Error::Domain(format!(
            "beta_delta needs t >= 2 delta = {}, got {t}",
            2.0 * h.delta
        )));
    }
    Ok(2.0 * h.m_delta * (-(t - 2.0 * h.delta) / h.c_p).exp())
}

/// Condition (c) of the cluster estimate: `a ‖b‖∞² ≤ 1/8`.
pub fn condition_c_holds(a: f64, b_sup: f64) -> bool {
    a * b_sup * b_sup <= 0.125
}

/// Per-block bound `B_j ≤ √(8!) e² M^{7/2} (a b_sup²)²`.
pub fn bj_bound(a: f64, b_sup: f64, h: &HypothesisConstants) -> f64 {
    let ab2 = a * b_sup * b_sup;
    sqrt_fact8() * std::f64::consts::E.powi(2) * h.m_delta.powf(3.5) * ab2 * ab2
}

/// Per-block bound `C_j ≤ M⁴ (4 + 2M⁴(4 + β⁴)) β⁴` with `β = β_δ(a)`.
///
/// Requires `a ≥ 2δ` (through `beta_delta`).
pub fn cj_bound(a: f64, h: &HypothesisConstants) -> Result<f64> {
    let beta = beta_delta(a, h)?;
    let m4 = h.m_delta.powi(4);
    let b4 = beta.powi(4);
    Ok(m4 * (4.0 + 2.0 * m4 * (4.0 + b4)) * b4)
}

/// The block length at which `C_j` falls to `ε⁴/16`:
///
/// ```text
/// a_C(ε) = 2δ − (C_P/4) ln[ (1/(16M⁴)) (2 + 1/M⁴) (√(1 + ε⁴/(32(1+2M⁴)²)) − 1) ].
/// ```
///
/// `cj_bound(a_C(ε)) = ε⁴/16` holds by construction (exact inversion of
/// the quadratic in `β⁴`).
pub fn a_c_of_eps(eps: f64, h: &HypothesisConstants) -> f64 {
    assert!(eps > 0.0, "a_c_of_eps needs eps > 0");
    let m4 = h.m_delta.powi(4);
    let u = eps.powi(4) / (32.0 * (1.0 + 2.0 * m4).powi(2));
    // sqrt(1+u) - 1 without cancellation for small eps.
    let sm1 = u / ((1.0 + u).sqrt() + 1.0);
    let arg = (2.0 + 1.0 / m4) * sm1 / (16.0 * m4);
    2.0 * h.delta - 0.25 * h.c_p * arg.ln()
}

/// `a_ε = max(a_C(ε), 2δ)` — the admissible block length.
pub fn a_eps(eps: f64, h: &HypothesisConstants) -> f64 {
    a_c_of_eps(eps, h).max(2.0 * h.delta)
}

/// The drift-amplitude threshold
/// `b(ε) = (ε/(2√e (8!)^{1/8} M^{7/8}) ∧ 1/√8) / √a_ε`.
///
/// Nondecreasing in `ε` on `(0, ∞)`; on `(0, ε₀]` the first branch of
/// the min is active and `b(ε)` is strictly increasing.
pub fn b_eps(eps: f64, h: &HypothesisConstants) -> f64 {
    assert!(eps > 0.0, "b_eps needs eps > 0");
    let numer = (eps / (2.0 * std::f64::consts::E.sqrt() * fact8_eighth() * h.m_delta.powf(0.875)))
        .min(0.125f64.sqrt());
    numer / a_eps(eps, h).sqrt()
}

/// The largest admissible `ε` for the cluster estimate:
/// `ε₀ = 2^{5/2} M² (8M⁸ + 2M⁴ + 1)^{1/4} ∧ √(e/2) (8!)^{1/8} M^{7/8}`.
pub fn epsilon0(h: &HypothesisConstants) -> f64 {
    let m2 = h.m_delta * h.m_delta;
    let m4 = m2 * m2;
    let m8 = m4 * m4;
    let first = 2.0f64.powf(2.5) * m2 * (8.0 * m8 + 2.0 * m4 + 1.0).powf(0.25);
    let second = (std::f64::consts::E / 2.0).sqrt() * fact8_eighth() * h.m_delta.powf(0.875);
    first.min(second)
}

/// Inverts `ε ↦ b_eps(ε)` on `(0, ε₀]` by bisection: returns the `η`
/// with `b_eps(η) = b_sup`, so that any drift with `‖b‖∞ ≤ b_sup`
/// satisfies the cluster estimate `|Γ_τ| ≤ η^{|τ|}` at block length
/// `a ≥ a_eps(η)`.
///
/// Errors unless `0 < b_sup ≤ b_eps(ε₀)`.
pub fn eta_inverse(b_sup: f64, h: &HypothesisConstants) -> Result<f64> {
    if !(b_sup > 0.0 && b_sup.is_finite()) {
        return Err(Error::invalid("b_sup", format!("must be finite and > 0, got {b_sup}")));
    }
    let hi0 = epsilon0(h);
    let cap = b_eps(hi0, h);
    if b_sup > cap {
        return Err(Error::Domain(format!(
            "b_sup = {b_sup} exceeds b_eps(epsilon0) = {cap}; no admissible eta"
        )));
    }
    let mut lo = hi0 * 1e-300;
    let mut hi = hi0;
    // b_eps is strictly increasing on (0, eps0], so bisection converges
    // to the unique root of b_eps(eta) - b_sup.
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if b_eps(mid, h) < b_sup {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The composite objective `b₁(δ) = b_eps(1)` evaluated on the
/// hypothesis constants realized by the OU process at onset time `δ`.
///
/// Returns NaN when `λδ ≤ ln 7` (the `L^8` norm diverges and the bound
/// chain is empty), so optimizers treat the point as non-finite.
pub fn b1_of_delta(delta: f64, p: &OUParams) -> f64 {
    match HypothesisConstants::from_ou(delta, p) {
        Ok(h) => b_eps(1.0, &h),
        Err(_) => f64::NAN,
    }
}

/// All bound quantities at one `ε`, evaluated at `(a, b_sup) =
/// (a_eps, b_eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub epsilon0: f64,
    pub a_c: f64,
    pub a_eps: f64,
    pub b_eps: f64,
    /// `beta_delta(a_eps)`.
    pub beta_at_a: f64,
    /// `bj_bound(a_eps, b_eps)`.
    pub bj_at: f64,
    /// `cj_bound(a_eps)`.
    pub cj_at: f64,
}

/// Evaluates the full bound chain at `ε`.
pub fn bound_report(eps: f64, h: &HypothesisConstants) -> Result<BoundReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("epsilon", format!("must be finite and > 0, got {eps}")));
    }
    let a_c = a_c_of_eps(eps, h);
    let a = a_eps(eps, h);
    let b = b_eps(eps, h);
    Ok(BoundReport {
        epsilon: eps,
        epsilon0: epsilon0(h),
        a_c,
        a_eps: a,
        b_eps: b,
        beta_at_a: beta_delta(a, h)?,
        bj_at: bj_bound(a, b, h),
        cj_at: cj_bound(a, h)?,
    })
}

/// `√(8!) = √40320`.
fn sqrt_fact8() -> f64 {
    40320.0f64.sqrt()
}

/// `(8!)^{1/8} = 40320^{1/8}`.
fn fact8_eighth() -> f64 {
    40320.0f64.powf(0.125)
}
