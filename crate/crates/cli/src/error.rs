use thiserror::Error;

use corpusforge_core::store::StoreError;
use corpusforge_core::workflow::WorkflowError;

use crate::simulate::SimError;

/// A failed command. The variant decides the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(_) => CliError::Io(e.to_string()),
            StoreError::Corrupt { .. } => CliError::Invariant(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<WorkflowError> for CliError {
    fn from(e: WorkflowError) -> Self {
        match e {
            WorkflowError::Store(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invariant { .. } => CliError::Invariant(e.to_string()),
            SimError::Workflow(inner) => inner.into(),
            SimError::InvalidParams(_) => CliError::Validation(e.to_string()),
        }
    }
}
