use std::path::PathBuf;

pub type Result<T, E = FedsimError> = std::result::Result<T, E>;

/// Process exit codes; stable across releases.
pub mod exit {
    pub const OK: i32 = 0;
    pub const TOLERANCE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum FedsimError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, row {row}: {message}")]
    Parse { path: PathBuf, row: usize, message: String },

    #[error(transparent)]
    Core(#[from] fedspeed_core::Error),

    #[error("tolerance exceeded: {0}")]
    Tolerance(String),

    /// A sweep stopped early; completed runs were still written.
    #[error("sweep run {value} failed after {completed} completed runs: {source}")]
    Sweep {
        value: String,
        completed: usize,
        #[source]
        source: Box<FedsimError>,
    },
}

impl FedsimError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        FedsimError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FedsimError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use fedspeed_core::Error as E;
        match self {
            FedsimError::Tolerance(_) => exit::TOLERANCE,
            FedsimError::Core(E::NumericOverflow { .. } | E::NonFinite(_)) => exit::NUMERIC,
            FedsimError::Sweep { source, .. } => source.exit_code(),
            _ => exit::CONFIG,
        }
    }
}
