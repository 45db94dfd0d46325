use std::path::PathBuf;

/// Failures surfaced by the command pipelines.
///
/// Variants split into two exit classes: configuration mistakes the caller
/// can fix on the command line (exit code 2) and runtime failures such as
/// unreadable or corrupt files (exit code 1).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic, not an XMAT file")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported XMAT version {version}")]
    VersionUnsupported { path: PathBuf, version: u32 },
    #[error("{path}: payload does not match header ({detail})")]
    TruncatedPayload { path: PathBuf, detail: String },
    #[error("{path}: line {line}: {detail}")]
    ParseError {
        path: PathBuf,
        line: u64,
        detail: String,
    },
    #[error("{path}: label indices must start at 0 and be contiguous (line {line})")]
    NonContiguousIndex { path: PathBuf, line: u64 },
    #[error("{path}: {detail}")]
    Manifest { path: PathBuf, detail: String },
    #[error("compute error: {0}")]
    Core(#[from] xclr_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure: 2 for configuration errors the
    /// caller can correct, 1 for everything that went wrong at runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
