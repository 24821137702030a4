use std::path::PathBuf;

use thiserror::Error;

pub type LabResult<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] cssi_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("seed {seed}, target {target}: {source}")]
    Run {
        seed: u64,
        target: usize,
        #[source]
        source: cssi_core::Error,
    },

    #[error("no checkpoint for epoch {epoch} (expected {path}); enable eval.checkpoint_every and retrain")]
    MissingCheckpoint { epoch: usize, path: PathBuf },

    #[error("property violation: {0}")]
    Violation(String),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const NUMERIC: i32 = 2;
    pub const VIOLATION: i32 = 3;
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            LabError::Core(e) | LabError::Run { source: e, .. } => e,
            LabError::Violation(_) => return exit::VIOLATION,
            LabError::Io { .. } | LabError::MissingCheckpoint { .. } => return exit::CONFIG,
        };
        match core {
            cssi_core::Error::NonFinite { .. } => exit::NUMERIC,
            cssi_core::Error::CsiDoesNotHold => exit::VIOLATION,
            _ => exit::CONFIG,
        }
    }
}

pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
    let path = path.into();
    move |source| LabError::Io { path, source }
}
