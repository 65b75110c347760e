use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single violated invariant found while validating a network or a
/// computation input, with enough structure for machine consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    /// Station the issue refers to, when station-specific.
    pub station: Option<usize>,
    pub message: String,
}

impl ValidationIssue {
    pub fn network(message: impl Into<String>) -> Self {
        Self { station: None, message: message.into() }
    }

    pub fn at_station(station: usize, message: impl Into<String>) -> Self {
        Self { station: Some(station), message: message.into() }
    }
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.station {
            Some(k) => write!(f, "station {}: {}", k, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {}", format_issues(.0))]
    Validation(Vec<ValidationIssue>),

    /// A precondition of an operation does not hold (e.g. a drift sign).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The requested computation needs a moment/capability the configured
    /// distributions do not have.
    #[error("capability missing: {0}")]
    Capability(String),

    /// A resource limit (event cap, truncation cap) was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A numerical procedure failed to converge or left its valid domain.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn validation_issues(&self) -> Option<&[ValidationIssue]> {
        match self {
            Error::Validation(issues) => Some(issues),
            _ => None,
        }
    }
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
