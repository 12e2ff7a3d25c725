use thiserror::Error;

/// Errors produced by the `dirinfo-core` library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: symbol {symbol} in column {column} is outside alphabet of size {size}")]
    SymbolOutOfRange {
        line: usize,
        column: &'static str,
        symbol: u64,
        size: usize,
    },

    #[error("sequence of length {len} is too short for order k={k} (need at least k+1 rows)")]
    SequenceTooShort { len: usize, k: usize },

    #[error("x and y sequences differ in length ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no unique stationary law: chain has {} communicating class(es) {classes:?}, period {period}", classes.len())]
    NotErgodic { classes: Vec<Vec<usize>>, period: usize },

    #[error("fitted transition matrix is not ergodic ({0}); use a larger sample or supply the model explicitly")]
    FittedNotErgodic(String),

    #[error("marginalization mask selects no slots")]
    EmptyMask,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
