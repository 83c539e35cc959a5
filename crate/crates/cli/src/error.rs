use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] latentgaze::Error),
}

impl CliError {
    /// 2 for bad input, 3 for insufficient data, 4 for divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(latentgaze::Error::InsufficientData(_)) => 3,
            CliError::Core(latentgaze::Error::Diverged { .. }) => 4,
            _ => 2,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

macro_rules! input_err {
    ($($arg:tt)*) => {
        $crate::error::CliError::Input(format!($($arg)*))
    };
}
pub(crate) use input_err;
