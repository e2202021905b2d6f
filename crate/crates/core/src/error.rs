use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("validation failed{}: {message}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<u64>, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("tensor `{name}`: {message}")]
    Tensor { name: String, message: String },

    #[error("unsupported weight bundle version {0}")]
    UnsupportedVersion(u32),

    #[error("weight bundle: {0}")]
    Bundle(String),

    #[error("non-finite activation in layer `{0}`")]
    NonFinite(String),

    #[error("no paired samples within tolerance")]
    NoPairs,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn validation(line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Validation { line, message: message.into() }
    }

    pub(crate) fn tensor(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Tensor { name: name.into(), message: message.into() }
    }
}
