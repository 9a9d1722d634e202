//! Error type shared by all numerical operations in this crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum GaugeError {
    /// A trajectory component became NaN or infinite (blow-up or bad parameters).
    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    /// A requested time lies outside the field's domain [0, T].
    #[error("time {t} outside the field domain [0, {t_end}]")]
    OutOfDomain { t: f64, t_end: f64 },

    /// A gauge matrix is numerically singular (condition estimate above 1e12).
    #[error("gauge matrix at node {node} is numerically singular (cond ~ {cond:.3e})")]
    SingularGauge { node: usize, cond: f64 },

    /// Grid and layer counts are incompatible.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Dimensions of operands do not agree.
    #[error("shape mismatch: {0}")]
    ShapeError(String),

    /// Rescaling factors must be strictly positive (ReLU homogeneity).
    #[error("rescale factor must be strictly positive, got {0}")]
    NonPositiveAlpha(f64),

    /// An architectural precondition is violated (e.g. no downstream layer to
    /// absorb an inverse scale factor).
    #[error("structure error: {0}")]
    StructureError(String),

    /// The attention gauge constraint A·B = α·I is violated.
    #[error("gauge constraint A·B = alpha·I violated (residual {0:.3e})")]
    ConstraintViolation(f64),

    /// The Wilson line over [0, T] deviates from the identity.
    #[error("holonomy deviates from identity by {0:.3e}")]
    HolonomyViolation(f64),

    /// Training produced a non-finite objective.
    #[error("training diverged at iteration {0}")]
    Divergence(usize),
}

pub type Result<T> = std::result::Result<T, GaugeError>;
