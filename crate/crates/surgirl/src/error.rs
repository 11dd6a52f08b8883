use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration or an invalid request; nothing was run.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: String,
        expected: u32,
    },
    #[error("{path}: parameter hash mismatch (manifest {expected}, content {actual})")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("{path}: truncated checkpoint ({reason})")]
    Truncated { path: PathBuf, reason: String },
    #[error("{path}: malformed checkpoint: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("task {index} ({task}): {source}")]
    Group {
        index: usize,
        task: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Core(#[from] surgirl_core::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for validation failures, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(e) if is_validation(e) => 2,
            HarnessError::Group { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

fn is_validation(e: &surgirl_core::Error) -> bool {
    use surgirl_core::Error as E;
    matches!(e, E::Config(_) | E::Transfer { .. } | E::Knowledge(_))
}

pub type Result<T> = std::result::Result<T, HarnessError>;
