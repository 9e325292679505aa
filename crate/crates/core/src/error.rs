use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("target column `{0}` not found in header")]
    MissingTarget(String),

    #[error("non-numeric cell {value:?} at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing response at row {0}")]
    MissingResponse(usize),

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("out of support: {0}")]
    OutOfSupport(String),

    #[error("tree {0} has an empty out-of-bag set")]
    EmptyOob(usize),

    #[error("no tree in the forest has a non-empty out-of-bag set")]
    NoOobTrees,

    #[error("imputation failed: {0}")]
    Imputation(String),

    #[error("between-imputation variance undefined for fewer than 2 imputations (got {0})")]
    TooFewImputations(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by the caller or the tool.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv(_)
                | Error::MissingTarget(_)
                | Error::NonNumeric { .. }
                | Error::MissingResponse(_)
                | Error::TooSmall(_)
                | Error::Dimension(_)
                | Error::OutOfSupport(_)
                | Error::Imputation(_)
        )
    }
}
