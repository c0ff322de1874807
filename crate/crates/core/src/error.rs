use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller passed a value that violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A vector with zero or non-finite norm where a direction is required.
    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    /// A series with zero variance where a correlation is required.
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    /// A feature file that does not follow its documented layout.
    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Manifest rows are numbered with the header as row 1.
    #[error("manifest: {message}, row {row}")]
    Manifest { row: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for bad input, 2 for internal faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 2,
            _ => 1,
        }
    }
}
