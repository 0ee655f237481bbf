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

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("non-uniform sampling at row {row}: step {step} differs from period {period}")]
    NonUniformSampling { row: usize, step: f64, period: f64 },

    #[error("time is not strictly increasing at row {row}")]
    NonMonotonicTime { row: usize },

    #[error("trace is empty or has fewer than two samples")]
    EmptyTrace,

    #[error("unparsable value `{value}` at row {row}, column `{column}`")]
    BadValue { row: usize, column: String, value: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("channel `{0}` is not binary-valued")]
    NonBinaryChannel(String),

    #[error("trace too short: {len} samples, need at least {needed}")]
    TraceTooShort { len: usize, needed: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("state {0} holds no segments")]
    EmptyState(usize),

    #[error("neighborhood length {got} differs from transition length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("underdetermined fit: {samples} samples for {monomials} monomials")]
    Underdetermined { samples: usize, monomials: usize },

    #[error("rank-deficient design matrix (rank {rank} of {cols})")]
    DegenerateDesign { rank: usize, cols: usize },

    #[error("unsupported model version {found} (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u64 },

    #[error("malformed model document: {0}")]
    MalformedDocument(String),

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid plant spec: {0}")]
    InvalidSpec(String),

    #[error("model has no states")]
    EmptyModel,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
