use thiserror::Error;

/// Errors raised by the distribution engine and the Stein machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// An exact computation would exceed its enumeration budget.
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    /// An index falls outside a stored window.
    #[error("out of range: {0}")]
    Range(String),
    /// A linear system could not be solved.
    #[error("singular system: {0}")]
    Singular(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
