use thiserror::Error;

/// Errors raised by the solver, the simulator and the experiment runner.
#[derive(Debug, Error)]
pub enum AsymmError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    /// A run produced a trace that breaks one of the protocol properties.
    /// `window` holds the event counters around the offending records.
    #[error("property `{property}` violated: {detail} (events {window:?})")]
    PropertyViolation {
        property: &'static str,
        detail: String,
        window: Vec<u64>,
    },

    #[error("numeric abort: {0}")]
    NumericAbort(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("binary encoding: {0}")]
    Binary(#[from] bincode::Error),
}

impl AsymmError {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            AsymmError::Config(_) | AsymmError::UnknownStrategy { .. } => 2,
            AsymmError::PropertyViolation { .. } => 3,
            AsymmError::NumericAbort(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        AsymmError::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        AsymmError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, AsymmError>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(AsymmError::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
