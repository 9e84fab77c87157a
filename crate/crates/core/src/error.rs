use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the calibration engine.
#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("invalid grid: M={m_count}, Q={q_count} (both must be >= 2)")]
    InvalidGrid { m_count: usize, q_count: usize },

    #[error("{field} = {value} is outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl CascadeError {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        CascadeError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CascadeError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad input (as opposed to the environment).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            CascadeError::Io { .. } | CascadeError::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CascadeError>;
