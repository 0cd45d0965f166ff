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

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("config parse error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("csv header mismatch: expected [{expected}], found [{found}]")]
    HeaderMismatch { expected: String, found: String },

    #[error("empty file: {0}")]
    EmptyFile(PathBuf),

    #[error("unparseable value {value:?} at row {row}, column {column:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("feature limit exceeded: {count} binary features (max {max})")]
    FeatureLimit { count: usize, max: usize },

    #[error("joint tensor too large: {cells} cells (max {max})")]
    TensorTooLarge { cells: u128, max: u128 },

    #[error("budget must be positive, got {0}")]
    NonPositiveBudget(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular distortion matrix for attribute {0}")]
    SingularMatrix(usize),

    #[error("provenance violation: expected {expected}, found {found}")]
    Provenance { expected: String, found: String },

    #[error("empty group for bucket {bucket:?}")]
    EmptyGroup { bucket: Vec<usize> },

    #[error("render error: {0}")]
    Render(String),

    #[error("privacy ledger mismatch: ledger total {ledger}, expected {expected}")]
    LedgerMismatch { ledger: f64, expected: f64 },

    #[error("zero-variance differences: t statistic undefined")]
    ZeroVariance,

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Backend(#[from] crate::llm::LlmError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
