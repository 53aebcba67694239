use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("artifact mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Core(#[from] pepsim::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numeric or data failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use pepsim::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Mismatch(_) => 3,
            CliError::Core(e) => match e {
                E::DegenerateRegion { .. }
                | E::InvalidConfig(_)
                | E::OverlappingRamps { .. }
                | E::NodeOutOfRange { .. }
                | E::NotStronglyConnected { .. }
                | E::IsolatedOrigin(_) => 2,
                E::DimensionMismatch { .. }
                | E::StepOrder { .. }
                | E::NonConvergence { .. }
                | E::WindowOutOfRange { .. }
                | E::DataIntegrity(_)
                | E::Json(_) => 3,
                E::Csv(c) if !c.is_io_error() => 3,
                E::Csv(_) | E::Io(_) => 4,
            },
        }
    }
}

pub fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
