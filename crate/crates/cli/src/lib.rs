//! Experiment commands behind the `sqnls` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: line {line}: {msg}", path.display())]
    Config { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Lib(#[from] sqnls::Error),
}

impl CliError {
    /// 1 for numerical failures, 2 for anything the caller can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(sqnls::Error::Numerical(_) | sqnls::Error::Rank(_)) => 1,
            _ => 2,
        }
    }
}
