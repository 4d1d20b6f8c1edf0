//! Numerical toolkit for the exponential-ergodicity analysis of a
//! one-dimensional Ornstein-Uhlenbeck diffusion perturbed by a bounded
//! delay drift.
//!
//! The crate is organized around one pipeline:
//!
//! * [`ou`] — closed-form quantities of the reference OU process
//!   (transition density relative to its invariant measure, `L^k` norms,
//!   the hypercontractivity constant `M_delta`), exact samplers, and
//!   Gauss–Hermite quadrature oracles.
//! * [`bounds`] — the explicit bound calculus built from the hypothesis
//!   constants `(delta, C_P, M_delta)`: the decay envelope `beta_delta`,
//!   the per-block bounds `B_j`/`C_j`, the thresholds `a_C(eps)`,
//!   `a_eps`, `b_eps`, `epsilon0`, and the composite objective
//!   `b1_of_delta`.
//! * [`optimize`] — derivative-free maximization of `b1_of_delta` and the
//!   scale-invariance diagnostics of its optimum.
//! * [`drift`] / [`sim`] — a registry of bounded measurable delay-drift
//!   functionals and time-stepping simulation of the reference and
//!   perturbed dynamics.
//! * [`stats`] — covariance-decay estimation, exponential fitting,
//!   Green–Kubo variance, and a CLT check over independent replicas.
//! * [`cluster`] — the block decomposition of the Girsanov weight:
//!   pathwise Hamiltonian, boundary-aware `alpha_j` factors, cluster
//!   weights `Gamma_tau` by Monte Carlo or deterministic quadrature,
//!   family enumeration, and the partition-function identity checks.
//! * [`inequalities`] — property suites for the elementary inequalities
//!   used by the cluster estimates.
//!
//! All Monte Carlo entry points take an explicit 64-bit seed and derive
//! one counter-based stream per sample, so results are reproducible
//! bit-for-bit regardless of thread scheduling.

pub mod bounds;
pub mod cluster;
pub mod drift;
pub mod error;
pub mod inequalities;
pub mod optimize;
pub mod ou;
pub mod params;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::Error;
pub use params::{MCEstimate, OUParams, SamplePath};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
