use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape error: {0}")]
    Shape(String),

    #[error("parameter outside model domain: {0}")]
    Domain(String),

    #[error("event on the support boundary: {0}")]
    Boundary(String),

    #[error("degenerate weight: prior density vanishes at {0:?}")]
    DegenerateWeight(Vec<f64>),

    #[error("training diverged at epoch {epoch}, batch {batch}: {reason}")]
    Divergence {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("instance {instance}: {source}")]
    Instance {
        instance: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite gradient in optimizer step")]
    NonFiniteGradient,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("unsupported loss: {0}")]
    UnsupportedLoss(String),

    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: unsupported schema version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("model cannot perform this task: {0}")]
    NotApplicable(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Domain(_) | Error::Boundary(_) | Error::DegenerateWeight(_) => "domain",
            Error::Divergence { .. } | Error::NonFiniteGradient => "divergence",
            Error::Config(_) | Error::UnknownKeys(_) | Error::UnsupportedLoss(_) => "config",
            Error::Parse { .. } | Error::Version { .. } | Error::Json(_) => "schema",
            Error::NotApplicable(_) => "not_applicable",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::Io { .. } => "io",
            Error::Instance { source, .. } => source.category(),
        }
    }
}
