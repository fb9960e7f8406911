use std::path::PathBuf;

use crate::query::ValidationError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty column {0}: no statistics defined")]
    EmptyColumn(String),

    #[error("invalid query: {}", join_errors(.0))]
    Validation(Vec<ValidationError>),

    #[error("workload generation exhausted after {attempts} attempts ({found} of {wanted} unique queries)")]
    WorkloadExhausted {
        attempts: usize,
        found: usize,
        wanted: usize,
    },

    #[error("missing hash index on {0}")]
    MissingIndex(String),

    #[error("missing sample for table {0}")]
    MissingSample(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn join_errors(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
