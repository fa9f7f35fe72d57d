use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a constraint. `field` names the offending key.
    #[error("config: {field}: {message}")]
    Config { field: String, message: String },

    #[error("parse: {0}")]
    Parse(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A NaN or infinity escaped the policy or the simulator.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("decode: {0}")]
    Decode(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("budget: exported model is {size} bytes, limit is {limit}")]
    Budget { size: usize, limit: usize },

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the command-line error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Parse(_) => "parse",
            Error::Infeasible(_) => "infeasible",
            Error::Dimension(_) => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::Decode(_) => "decode",
            Error::Checksum { .. } => "checksum",
            Error::Version { .. } => "version",
            Error::Budget { .. } => "budget",
            Error::Io { .. } => "io",
        }
    }
}

impl From<bincode::Error> for Error {
    fn from(e: bincode::Error) -> Self {
        Error::Decode(e.to_string())
    }
}
