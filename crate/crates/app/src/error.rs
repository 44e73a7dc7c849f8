use std::io;
use std::path::PathBuf;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] spd_core::Error),

    #[error("unknown backend `{0}`; expected mock, tiny or splm:<path>")]
    UnknownBackend(String),

    #[error("n-gram store not found: {}", .0.display())]
    NgramNotFound(PathBuf),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: io::Error },

    #[error("{0}")]
    Usage(String),
}

impl AppError {
    pub fn file(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> AppError {
        let path = path.into();
        move |source| AppError::File { path, source }
    }

    /// 1 for bad input, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(e) if !e.is_validation() => 2,
            AppError::File { .. } | AppError::NgramNotFound(_) => 2,
            _ => 1,
        }
    }
}
