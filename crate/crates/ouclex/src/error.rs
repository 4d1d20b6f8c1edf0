//! Crate-wide error type.

/// Errors produced by constructors and operations across the crate.
///
/// Domain violations are reported through `Error`; quantities that are
/// legitimately infinite (divergent norms) or statistically unavailable
/// (unresolved tails, degenerate fits) are represented by flagged values
/// on the result types instead.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar argument or field violates its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An operation was called outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The supplied path or window does not cover the required span.
    #[error("path too short: {0}")]
    PathTooShort(String),

    /// A regression or solve has too little usable data.
    #[error("fit unavailable: {0}")]
    FitUnavailable(String),

    /// Exhaustive enumeration was refused because it would be too large.
    #[error("refused: {0}")]
    Refused(String),

    /// The objective was non-finite everywhere it was probed.
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
