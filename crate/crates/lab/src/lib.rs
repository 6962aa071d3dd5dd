//! Training harness, persistence, analysis and command line for the
//! speaker/listener maze laboratory built on `sitcomm-core`.

pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod oracle;
pub mod runlog;
pub mod svg;
pub mod sweep;
pub mod traces;
pub mod train;

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sitcomm_core::Error),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error("{0}")]
    Analysis(String),
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, msg: impl Into<String>) -> Self {
        LabError::Parse {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
