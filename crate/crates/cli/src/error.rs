use dm_core::Error as CoreError;

/// Failures grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or input data (exit 2).
    #[error("config error: {0}")]
    Config(String),
    /// A solver, factorization or training run failed (exit 3).
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidParameter { .. }
            | CoreError::NoActuators
            | CoreError::PitchTooCoarse { .. }
            | CoreError::DuplicateActuatorNode { .. }
            | CoreError::ActuatorOffPlate { .. }
            | CoreError::Dimension(_)
            | CoreError::PointOutsideAperture { .. }
            | CoreError::InsufficientCoverage
            | CoreError::ZeroTarget
            | CoreError::TooLarge { .. }
            | CoreError::Format { .. } => CliError::Config(msg),
            CoreError::Io { .. } => CliError::Io(msg),
            _ => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
