use thiserror::Error;

/// Errors produced by the extraction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown attribute key `{key}` at {path}:{line}")]
    UnknownAttribute {
        key: String,
        path: String,
        line: usize,
    },

    #[error("embedding dimension mismatch at {path}:{line}: expected {expected}, got {got}")]
    DimensionMismatch {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("canonical unit `{unit}` for attribute `{attribute}` is missing from the embedding table")]
    CanonicalUnitMissing { attribute: String, unit: String },

    #[error("attribute `{0}` has no usable alias")]
    NoUsableAlias(String),

    #[error("duplicate gold record for product `{product_id}`, attribute `{attribute}`")]
    DuplicateGold {
        product_id: String,
        attribute: String,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (parameter norm {param_norm:.4})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norm: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
