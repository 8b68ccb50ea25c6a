use std::path::{Path, PathBuf};

use ruled_odometry::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl ToString) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// 2 for bad input, 3 when too few lines are detected, 4 when the
    /// estimation itself breaks down.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) | Self::Io { .. } | Self::Format { .. } => 2,
            Self::Core(e) => match e {
                CoreError::NotEnoughLines { .. } => 3,
                CoreError::Infeasible { .. }
                | CoreError::NonPositiveDepth { .. }
                | CoreError::DegenerateProjection
                | CoreError::DegenerateAlpha { .. }
                | CoreError::NoObservations { .. }
                | CoreError::ZeroDirection
                | CoreError::SeamMismatch { .. } => 4,
                CoreError::OutOfRange { .. }
                | CoreError::TimeRangeMismatch
                | CoreError::LineNotVisible { .. }
                | CoreError::FrameGap { .. }
                | CoreError::InvalidInput(_) => 2,
            },
        }
    }
}
