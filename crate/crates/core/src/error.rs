use thiserror::Error;

/// Errors raised by the mechanism, accounting and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("alpha grid mismatch: ledger has {expected} orders, curve has {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "budget infeasible: epsilon {target} cannot be met with {kind} noise within knob bounds \
         [{lower:e}, {upper:e}] (best achievable epsilon {best})"
    )]
    Infeasible {
        kind: String,
        target: f64,
        best: f64,
        lower: f64,
        upper: f64,
    },

    #[error("privacy budget exhausted at round {round} (client {client})")]
    BudgetExhausted { round: usize, client: usize },

    #[error("mechanism mismatch: expected {expected}, found {found}")]
    MechanismMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("config error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
