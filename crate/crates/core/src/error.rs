use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("index out of bounds: {0}")]
    Bounds(String),
    #[error("staging constraint violated: {0}")]
    Constraint(String),
    #[error("row {row} is inconsistent with the structural constraints: {message}")]
    DataConsistency { row: usize, message: String },
    #[error("dataset is empty")]
    EmptyData,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("conditioning event has probability zero")]
    UndefinedConditional,
    #[error("not a topological order: {0}")]
    NotTopological(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Csv { row: usize, column: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported document version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("model invariant violated: {0}")]
    Invariant(String),
    #[error("statistical error: {0}")]
    Statistics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
