use std::path::PathBuf;
use thiserror::Error;

/// Error type for drivers and the CLI, carrying the process exit code
/// taxonomy: configuration 2, resource 3, numeric 4, validation 5.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(hcg_core::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cache error: {0}")]
    Cache(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
}

impl From<hcg_core::Error> for LabError {
    fn from(e: hcg_core::Error) -> Self {
        LabError::Core(e)
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &LabError) -> i32 {
    match err {
        LabError::Config(_) => 2,
        LabError::Cache(_) => 2,
        LabError::Io { .. } => 2,
        LabError::Core(hcg_core::Error::InvalidInput(_)) => 2,
        LabError::Core(hcg_core::Error::ResourceLimit(_)) => 3,
        LabError::Core(hcg_core::Error::Numeric(_)) => 4,
        LabError::ValidationFailed(_) => 5,
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
    let path = path.into();
    move |source| LabError::Io { path, source }
}
