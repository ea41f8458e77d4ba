//! Configuration, experiment runner and artifact writer behind the `pelab` binary.

pub mod artifacts;
pub mod config;
pub mod runner;

use std::fmt;

use pelab_core::CoreError;

/// Failure of a run, mapped to a process exit code by [`CliError::exit_code`].
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// The configuration does not match the schema; `path` names the field.
    Schema { path: String, message: String },
    /// Parameters parse but are rejected by the model.
    Invalid(String),
    /// The model left the admissible range.
    BlowUp(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema { .. } | CliError::Invalid(_) => 2,
            CliError::BlowUp(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema { path, message } => write!(f, "config error at `{path}`: {message}"),
            CliError::Invalid(m) => write!(f, "invalid parameters: {m}"),
            CliError::BlowUp(m) => write!(f, "run aborted: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::BlowUp(_) => CliError::BlowUp(e.to_string()),
            CoreError::Io(m) => CliError::Io(m),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
