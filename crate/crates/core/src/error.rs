use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: invalid field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("class `{class}` has {count} document(s); stratified split needs at least 2")]
    ClassTooSmall { class: String, count: usize },

    #[error("unknown Duta10k label `{label}`; known labels: {known}")]
    UnknownDutaLabel { label: String, known: String },

    #[error("unknown Agora category `{0}`")]
    UnknownAgoraCategory(String),

    #[error("drug category `{path}` derives sub-class `{derived}`, which is not a known drug sub-class")]
    UnknownDrugSubclass { path: String, derived: String },

    #[error("resource `{resource}` row {row}: {message}")]
    Resource {
        resource: String,
        row: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("document `{id}`: {message}")]
    Document { id: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("model format error in `{field}`: {message}")]
    ModelFormat { field: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn model(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ModelFormat {
            field: field.into(),
            message: message.into(),
        }
    }
}
