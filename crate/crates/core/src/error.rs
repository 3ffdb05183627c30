use thiserror::Error;

/// Errors produced anywhere in the simulation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered at t = {t} us")]
    NumericalDomain { t: f64 },

    #[error("integration failed at t = {t} us: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("no trajectory accepted under conditioning mode `{mode}`")]
    EmptyEnsemble { mode: String },

    #[error("phase of basis state {index} is undefined (amplitude below 1e-12)")]
    UndefinedPhase { index: usize },

    #[error("scan cell (gamma_e = {gamma_e}, gamma_r = {gamma_r}) failed: {source}")]
    ScanCell {
        gamma_e: f64,
        gamma_r: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
