use thiserror::Error;

/// Errors shared across the lab. Variants mirror the failure kinds each
/// construction can report; payloads carry enough context to reproduce.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} is outside horizon {horizon}")]
    IndexOutOfRange { index: usize, horizon: usize },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("truncation exceeded: requested {requested}, available {available}")]
    TruncationExceeded { requested: usize, available: usize },

    #[error("horizon too small: have {have}, need at least {need}")]
    HorizonTooSmall { have: usize, need: usize },

    #[error("schedule block for m = {m} holds {found} intervals, need at least {m}")]
    InsufficientBlock { m: usize, found: usize },

    #[error("no chain level admits a stratification of the multiplier")]
    NoStratification,

    #[error("witness search failed for pair ({i}, {j}): best corner norm {best}")]
    WitnessNotFound { i: usize, j: usize, best: f64 },

    #[error("construction error: {0}")]
    ConstructionError(String),

    #[error("invalid short exact sequence of towers: {0}")]
    InvalidSes(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("certificate failure: {0}")]
    CertificateFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
