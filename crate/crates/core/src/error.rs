use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NPY data: {0}")]
    Format(String),

    #[error("unsupported NPY dtype {0:?} (only little-endian float32 '<f4' is accepted)")]
    UnsupportedDtype(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("manifest validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("split error: {0}")]
    Split(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("depth frame error: {0}")]
    Depth(String),

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("model blob error: {0}")]
    Model(String),

    #[error("fusion error: {0}")]
    Fusion(String),

    #[error("stage {stage} failed for {context}")]
    Stage {
        stage: &'static str,
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, context: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            context: context.into(),
            source: Box::new(self),
        }
    }
}
