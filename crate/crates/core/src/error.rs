use std::path::PathBuf;

use thiserror::Error;

use crate::faults::ScenarioId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes of the external-model adapter. Each maps to a distinct code.
#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("failed to launch model process: {0}")]
    Spawn(String),
    #[error("model process exited unexpectedly{}", .status.as_deref().map(|s| format!(" ({s})")).unwrap_or_default())]
    ProcessExited { status: Option<String> },
    #[error("malformed frame from model process: {0}")]
    MalformedFrame(String),
    #[error("no response from model process within {0:?}")]
    Timeout(std::time::Duration),
    #[error("response id {got} does not match any pending request")]
    IdMismatch { got: u64 },
    #[error("prediction for request {id} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        id: u64,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("model process reported an error: {0}")]
    Remote(String),
    #[error("i/o error talking to model process: {0}")]
    Io(#[from] std::io::Error),
}

impl AdapterError {
    pub fn code(&self) -> &'static str {
        match self {
            AdapterError::Spawn(_) => "spawn",
            AdapterError::ProcessExited { .. } => "process-exit",
            AdapterError::MalformedFrame(_) => "malformed-frame",
            AdapterError::Timeout(_) => "timeout",
            AdapterError::IdMismatch { .. } => "id-mismatch",
            AdapterError::ShapeMismatch { .. } => "shape-mismatch",
            AdapterError::Remote(_) => "remote-error",
            AdapterError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}, column {column}: {reason}")]
    BadCell {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("{split} split is too short: {available} rows, a window needs {needed}")]
    SplitTooShort {
        split: &'static str,
        available: usize,
        needed: usize,
    },
    #[error("no eligible windows: {0}")]
    EmptyIndexSet(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("normal equations are singular; use a positive ridge penalty")]
    Singular,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("external model: {0}")]
    Adapter(#[from] AdapterError),
    #[error("clean MSE is zero on the sampled windows; degradation is undefined")]
    DegradationUndefined,
    #[error("reports are not comparable: {0}")]
    ConfigMismatch(String),
    #[error("fit undefined: {0}")]
    FitUndefined(String),
    #[error("forecaster failed on window {window}{}: {source}", .scenario.map(|s| format!(" under {s}")).unwrap_or_default())]
    Forecast {
        window: usize,
        scenario: Option<ScenarioId>,
        #[source]
        source: Box<Error>,
    },
}
