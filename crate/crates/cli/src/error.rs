use thiserror::Error;

/// Errors surfaced by the command line, each with its exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("hypothesis '{clause}' fails: {detail}")]
    Hypothesis { clause: String, detail: String },

    #[error("validation failed: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Core(#[from] spreadspeed::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use spreadspeed::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Json(_) => 1,
            CliError::Hypothesis { .. } => 2,
            CliError::Mismatch(_) => 4,
            CliError::Core(e) => match e {
                E::InvalidKernel(_) | E::InvalidEnvironment(_) | E::Io(_) | E::Csv(_) => 1,
                E::Precondition(_) => 2,
                _ => 3,
            },
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}
