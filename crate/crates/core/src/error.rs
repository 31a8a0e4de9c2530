//! Error type shared by every module of the library.

use thiserror::Error;

/// Errors raised by series arithmetic, jet-space operations and the
/// normalization pipelines.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    /// A reciprocal was requested for a series whose constant term is zero.
    #[error("reciprocal requires a nonzero constant term")]
    ZeroConstantTerm,

    /// A composition substituted a series with a nonzero constant term into a
    /// truncated series, which would make every output coefficient depend on
    /// unknown tail terms.
    #[error("composition substituent for `{var}` has a nonzero constant term")]
    NonzeroConstantSubstituent {
        /// Name of the variable whose substituent is offending.
        var: char,
    },

    /// An operation needed coefficients beyond the trustworthy order of its
    /// input.
    #[error("requested data beyond the trustworthy order: {detail}")]
    OrderExceeded {
        /// Human-readable description of the failing requirement.
        detail: String,
    },

    /// A map failed the fibre-preserving validity requirements
    /// (origin fixed, invertible linear part).
    #[error("invalid fibre-preserving map: {detail}")]
    InvalidMap {
        /// Which requirement failed.
        detail: String,
    },

    /// A flow evaluation at unit time was requested for a generator whose
    /// iterated action does not gain weight, so the exponential series does
    /// not terminate within the truncation order.
    #[error("flow evaluation at t = 1 does not converge within the truncation order: {detail}")]
    FlowEvaluation {
        /// Which generator component failed the weight-gain requirement.
        detail: String,
    },

    /// A normalization stage was asked to run at weight `alpha` although a
    /// lower weight still carries non-normal terms.
    #[error("weights below {alpha} are not yet in normal form")]
    NotNormalBelow {
        /// Stage weight that was requested.
        alpha: u32,
    },

    /// A stage defect was not semi-homogeneous of the announced weight, or
    /// carried terms of p-degree three or higher.
    #[error("stage defect is not semi-homogeneous of weight {alpha} and p-degree <= 2")]
    NotSemiHomogeneous {
        /// Stage weight that was announced.
        alpha: u32,
    },

    /// A stage defect contained a monomial that no admissible correction can
    /// cancel (the monomial already lies in the normal family).
    #[error("stage defect contains an uncancellable monomial x^{i} y^{j} p^{k}")]
    UnsolvableDefect {
        /// x-degree of the offending monomial.
        i: u32,
        /// y-degree of the offending monomial.
        j: u32,
        /// p-degree of the offending monomial.
        k: u32,
    },

    /// A step of the staged normalization was called on an equation that does
    /// not satisfy condition D1 (right side vanishes at p = 0).
    #[error("input does not satisfy D1 (K(x, y, 0) = 0)")]
    PreconditionD1,

    /// The slope-normalization step requires D1 and a vanishing p-slope at the
    /// origin, K_p(0, 0, 0) = 0.
    #[error("input does not satisfy D1 together with K_p(0,0,0) = 0")]
    PreconditionOriginSlope,

    /// A step required conditions D1 and D2 on its input.
    #[error("input does not satisfy D1 and D2")]
    PreconditionD1D2,

    /// A step required conditions D1, D2 and D3 on its input.
    #[error("input does not satisfy D1, D2 and D3")]
    PreconditionD1D2D3,

    /// An invariant evaluation required a normal-form input.
    #[error("input is not in normal form: {detail}")]
    NotNormal {
        /// Which condition failed.
        detail: String,
    },

    /// Two computations that must agree by construction disagreed; this
    /// indicates a bug, never bad user input.
    #[error("internal consistency failure: {detail}")]
    Internal {
        /// Description of the mismatch.
        detail: String,
    },
}

impl Error {
    /// Shorthand for an [`Error::OrderExceeded`] with a formatted detail.
    pub fn order(detail: impl Into<String>) -> Self {
        Error::OrderExceeded {
            detail: detail.into(),
        }
    }

    /// Shorthand for an [`Error::Internal`] with a formatted detail.
    pub fn internal(detail: impl Into<String>) -> Self {
        Error::Internal {
            detail: detail.into(),
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
