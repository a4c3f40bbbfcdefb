use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the region where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed input (configuration, rule file, profile).
    #[error("validation error: {0}")]
    Validation(String),
    /// A constructed rule or density broke one of its invariants.
    #[error("construction failure: {message} (at m = {at}, value {value})")]
    Construction { message: String, at: f64, value: f64 },
    /// An iterative solver stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("root finding failed: {0}")]
    RootFinding(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn construction(msg: impl Into<String>, at: f64, value: f64) -> Self {
        Error::Construction { message: msg.into(), at, value }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Validation(_) => "validation",
            Error::Construction { .. } => "construction",
            Error::NonConvergence { .. } => "non_convergence",
            Error::RootFinding(_) => "root_finding",
        }
    }
}
