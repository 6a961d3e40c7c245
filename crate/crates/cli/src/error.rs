use ring_core::RingError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("image: {0}")]
    Image(String),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 1 for failed computations or checks, 2 for bad invocations or inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Ring(e) => match e {
                RingError::ShapeMismatch(_)
                | RingError::DimensionMismatch { .. }
                | RingError::NonDivisibleChannels { .. }
                | RingError::InvalidArgument(_)
                | RingError::Unsupported(_)
                | RingError::MissingPlan
                | RingError::EmptyCalibration => 2,
                _ => 1,
            },
            _ => 2,
        }
    }
}

pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}
