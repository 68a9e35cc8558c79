//! Lab-level error type with the process exit-code policy:
//! 1 for usage/config/file problems, 2 for numerical failures.

use crate::config::ConfigError;
use chstab_core::{DynamicsError, FeedbackError, GapError, SpectralError};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Gap(#[from] GapError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Csv {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// 1 = usage/config error, 2 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Io { .. }
            | LabError::Csv { .. }
            | LabError::Config(_)
            | LabError::Usage(_)
            | LabError::Spectral(_)
            | LabError::Feedback(_) => 1,
            LabError::Gap(_) | LabError::Dynamics(_) => 2,
        }
    }
}
