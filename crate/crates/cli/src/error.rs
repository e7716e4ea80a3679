use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("input: {0}")]
    Input(String),
    /// The command finished but some units of work failed.
    #[error("{failed} of {total} {what} failed")]
    Partial { failed: usize, total: usize, what: &'static str },
    #[error(transparent)]
    Core(#[from] star_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    /// 0 success, 1 partial or runtime failure, 2 usage or input error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            _ => 1,
        }
    }
}

/// Maps a failure to read an input file onto [`CliError::Input`].
pub fn load<T>(path: &Path, r: star_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::input(path, e))
}
