//! Configuration-driven front end for the `sensorfault` evaluation harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use sensorfault::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 2 for config and data errors, 3 for model and protocol failures, 4
    /// when degradation is undefined.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::Csv(_)
        | Error::HeaderMismatch { .. }
        | Error::BadCell { .. }
        | Error::Schema(_)
        | Error::SplitTooShort { .. }
        | Error::EmptyIndexSet(_)
        | Error::InvalidArgument(_)
        | Error::ProtocolViolation(_)
        | Error::ConfigMismatch(_) => 2,
        Error::DegradationUndefined => 4,
        Error::Forecast { source, .. } => match core_exit_code(source) {
            4 => 4,
            _ => 3,
        },
        Error::ShapeMismatch { .. }
        | Error::Singular
        | Error::Adapter(_)
        | Error::FitUndefined(_) => 3,
    }
}
