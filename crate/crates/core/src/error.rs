use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GmmvError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GmmvError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A recovery condition was asked for outside the regime where it is defined,
    /// e.g. a local isometry constant at or above one.
    #[error("condition inapplicable: {0}")]
    ConditionInapplicable(String),

    #[error("infeasible constraints: relative residual {residual:.3e} exceeds {threshold:.1e}")]
    Infeasible { residual: f64, threshold: f64 },

    #[error("limit exceeded: {0}")]
    LimitExceeded(String),

    #[error("no support of size <= {s_max} explains the observations")]
    NoSupportFound { s_max: usize },

    #[error("trial failed (seed {seed:#018x}): {source}")]
    Trial {
        seed: u64,
        #[source]
        source: Box<GmmvError>,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GmmvError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GmmvError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GmmvError::Io { path: path.into(), source }
    }
}
