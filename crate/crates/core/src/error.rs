use thiserror::Error;

use crate::array::RowAddress;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid device model: {0}")]
    InvalidModel(String),

    #[error("invalid sense configuration: {0}")]
    InvalidSense(String),

    #[error("calibration did not converge: {0}")]
    NonConvergence(String),

    #[error("address {addr} is out of bounds for a {banks}x{rows} array")]
    OutOfBounds {
        addr: RowAddress,
        banks: usize,
        rows: usize,
    },

    #[error("word width {got} does not match row width {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("mapping violation: {0}")]
    MappingViolation(String),

    #[error("operation {0} is not in the cost table")]
    UnknownOp(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("program did not halt within {0} steps")]
    StepBudgetExceeded(usize),

    #[error("training set is missing class {0}")]
    MissingClass(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("invalid shift estimate: {0}")]
    InvalidShift(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
