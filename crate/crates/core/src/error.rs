use thiserror::Error;

/// Errors raised by constructors and numerical routines.
#[derive(Debug, Error)]
pub enum QtpeError {
    /// An enumeration or allocation guard was exceeded.
    #[error("size limit exceeded: {what} = {value} (limit {limit})")]
    SizeLimit {
        what: &'static str,
        value: u128,
        limit: u128,
    },

    /// An argument lies outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A hypothesis of the underlying lemma is not met.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Two objects that must agree in shape do not.
    #[error("shape mismatch: {what} (expected {expected}, got {got})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Malformed ensemble file.
    #[error("parse error in field `{field}`: {reason}")]
    Parse { field: &'static str, reason: String },

    /// An ensemble failed its structural validation.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = QtpeError> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> QtpeError {
    QtpeError::Domain(msg.into())
}

pub(crate) fn size_limit(what: &'static str, value: usize, limit: usize) -> QtpeError {
    QtpeError::SizeLimit {
        what,
        value: value as u128,
        limit: limit as u128,
    }
}
