use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}: {message}")]
    Parse { row: u64, message: String },

    #[error("ordering error at row {row}: timestamp {timestamp} does not increase")]
    Ordering { row: u64, timestamp: f64 },

    #[error("sync error: {0}")]
    Sync(String),

    #[error("gap error: {position} stream has no samples between {start}s and {end}s")]
    Gap {
        position: String,
        start: f64,
        end: f64,
    },

    #[error("identity error: expected patient `{expected}`, found `{found}`")]
    Identity { expected: String, found: String },

    #[error("length error: {0}")]
    Length(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("compatibility error: {0}")]
    Compatibility(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
