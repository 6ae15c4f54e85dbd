use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("atom index {index} out of range for a {atoms}-atom register")]
    AtomOutOfRange { index: usize, atoms: usize },

    #[error("unknown level label `{0}`")]
    UnknownLabel(String),

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("boundary condition violated: {0}")]
    Boundary(String),

    #[error("schedule singularity at t = {t:e} s: {what}")]
    Singularity { t: f64, what: String },

    #[error("no positive root: {0}")]
    NoPositiveRoot(String),

    #[error("integration failed at t = {t:e} s: {reason}")]
    Integration { t: f64, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Configuration problems map to exit status 2, everything else to 1.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
