use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulation suite.
///
/// The variants map onto the process exit codes used by the `tcs` binary:
/// configuration problems exit with 2, numerical breakdowns with 3 and
/// invariant violations with 4.
#[derive(Debug, Error)]
pub enum TcsError {
    #[error("dimension mismatch: expected {expected} nodes, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("internal variable must stay positive, got {value} at index {index}")]
    Domain { index: usize, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("CFL violation: dt = {dt:e} exceeds the limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("step size underflow at t = {t}: dt fell below {min_dt:e}; increase epsilon or use a smaller coupling")]
    Stiffness { t: f64, min_dt: f64 },

    #[error("density fell below the positivity floor at node {index}: {value:e}")]
    Positivity { index: usize, value: f64 },

    #[error("numerical instability at step {step} (t = {t}): {what}")]
    Instability { step: usize, t: f64, what: String },

    #[error("input is not normalized: total mass {mass}")]
    Normalization { mass: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl TcsError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TcsError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            TcsError::Config(_)
            | TcsError::MissingKey(_)
            | TcsError::Parse(_)
            | TcsError::Cfl { .. }
            | TcsError::Io { .. }
            | TcsError::Serde(_) => 2,
            TcsError::Dimension { .. }
            | TcsError::Domain { .. }
            | TcsError::Stiffness { .. }
            | TcsError::Positivity { .. }
            | TcsError::Instability { .. }
            | TcsError::Normalization { .. }
            | TcsError::Fit(_) => 3,
            TcsError::Invariant(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, TcsError>;
