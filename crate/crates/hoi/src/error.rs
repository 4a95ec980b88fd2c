use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HoiError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HoiError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {kind} at byte offset {offset}")]
    Format { path: PathBuf, offset: usize, kind: FormatErrorKind },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] hoi_core::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatErrorKind {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated: need {need} bytes, file has {have}")]
    Truncated { need: usize, have: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid entry: {0}")]
    Invalid(String),
}

impl HoiError {
    /// Stable machine-readable prefix for the error line.
    pub fn code(&self) -> &'static str {
        match self {
            HoiError::Usage(_) => "E_USAGE",
            HoiError::Config(_) => "E_CONFIG",
            HoiError::Io { .. } => "E_IO",
            HoiError::Format { .. } => "E_FORMAT",
            HoiError::Json { .. } => "E_JSON",
            HoiError::Core(e) => match e {
                hoi_core::Error::NonFiniteGradient { .. } | hoi_core::Error::NonFiniteLoss { .. } => "E_TRAIN",
                hoi_core::Error::Generation { .. } => "E_GENERATION",
                hoi_core::Error::Config(_) | hoi_core::Error::UnknownTarget(_) => "E_CONFIG",
                _ => "E_CORE",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HoiError::Usage(_) => 2,
            HoiError::Config(_) => 3,
            HoiError::Io { .. } => 4,
            HoiError::Format { .. } | HoiError::Json { .. } => 5,
            HoiError::Core(_) => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HoiError::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        HoiError::Json { path: path.into(), source }
    }

    /// `CODE: message` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("{}: {}", self.code(), msg)
    }
}
