use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErwError {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// The request is valid but would exceed a configured resource cap.
    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),
    /// Parameters the model supports but this crate deliberately does not cover.
    #[error("out of scope: {0}")]
    OutOfScope(String),
    /// A fit or scan cell that cannot be computed from the given data.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T, E = ErwError> = std::result::Result<T, E>;
