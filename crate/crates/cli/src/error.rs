use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } | CliError::Data(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<flatlayer::Error> for CliError {
    fn from(e: flatlayer::Error) -> Self {
        use flatlayer::Error as E;
        match e {
            E::Io(source) => CliError::Io {
                path: PathBuf::new(),
                source,
            },
            E::Format(_) => CliError::Data(e.to_string()),
            E::Divergence { .. }
            | E::NotConverged { .. }
            | E::SingularDistance
            | E::ImaginarySpeed { .. }
            | E::NonpositiveRadicand { .. } => CliError::Numerical(e.to_string()),
            E::InvalidGrid(_)
            | E::OverlappingLayers { .. }
            | E::ShapeMismatch(_)
            | E::SourceOnNode { .. }
            | E::InvalidParameter(_)
            | E::InsufficientData(_) => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
