use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no data: {0}")]
    NoData(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation requires a softmax head")]
    NotSoftmax,

    #[error("successor {next} of (s={state}, a={action}) is outside the declared support")]
    OutsideSupport {
        state: usize,
        action: usize,
        next: usize,
    },

    #[error("configuration error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("cache mismatch at {path}: {reason}")]
    CacheMismatch { path: PathBuf, reason: String },

    #[error("corrupt or unsupported file format: {0}")]
    Format(String),

    #[error("output directory is locked by another run: {0}")]
    Locked(PathBuf),

    #[error("missing artifact: {0}")]
    Missing(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::CacheMismatch { .. } => 3,
            _ => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
