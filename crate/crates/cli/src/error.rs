use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or an invalid config; exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] rcmdp::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0} verification check(s) failed")]
    Verification(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}
