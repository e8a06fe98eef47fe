use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum PottsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size mismatch: expected {expected}, got {actual} ({what})")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("isolated nodes have zero degree: {0:?}")]
    IsolatedNodes(Vec<usize>),

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("solver diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("seeding failed: {0}")]
    Seeding(String),

    #[error("parse error in {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T, E = PottsError> = std::result::Result<T, E>;

impl PottsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PottsError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PottsError::InvalidArgument(msg.into())
    }

    /// Process exit code: 1 usage, 2 I/O, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PottsError::Io { .. } | PottsError::Image { .. } | PottsError::Parse { .. } => 2,
            PottsError::NumericDegeneracy(_)
            | PottsError::Divergence { .. }
            | PottsError::IsolatedNodes(_)
            | PottsError::Seeding(_) => 3,
            PottsError::InvalidArgument(_)
            | PottsError::SizeMismatch { .. }
            | PottsError::Config(_) => 1,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(PottsError::SizeMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
