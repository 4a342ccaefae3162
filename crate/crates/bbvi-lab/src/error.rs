use std::fmt;

/// Errors surfaced by the library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix argument has the wrong size.
    DimensionMismatch { expected: usize, got: usize },
    /// A caller violated a documented precondition.
    ContractViolation(String),
    /// A parameter left the domain of its family (e.g. a non-positive
    /// scale under the identity conditioner).
    DomainViolation(String),
    /// The requested combination of family, conditioner and algorithm
    /// is not supported.
    UnsupportedConfiguration(String),
    /// A numerical operation produced a non-finite or invalid result.
    NumericFailure(String),
    /// A configuration file or CLI argument could not be interpreted.
    Config(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::ContractViolation(msg) => write!(f, "contract violation: {msg}"),
            Error::DomainViolation(msg) => write!(f, "domain violation: {msg}"),
            Error::UnsupportedConfiguration(msg) => write!(f, "unsupported configuration: {msg}"),
            Error::NumericFailure(msg) => write!(f, "numeric failure: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
