use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("metric kinds differ: {first} in {first_file}, {second} in {second_file}")]
    MetricKindMismatch { first: String, first_file: String, second: String, second_file: String },
    #[error("cannot write output: {0}")]
    Output(String),
    #[error("cannot read {path}: {message}")]
    Input { path: String, message: String },
    #[error(transparent)]
    Core(#[from] longtail_core::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn input(path: &Path, message: impl std::fmt::Display) -> Self {
        Self::Input { path: path.display().to_string(), message: message.to_string() }
    }

    pub(crate) fn output(path: &Path, message: impl std::fmt::Display) -> Self {
        Self::Output(format!("{}: {message}", path.display()))
    }
}
