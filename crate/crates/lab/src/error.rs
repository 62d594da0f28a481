use std::path::PathBuf;

use trajlab_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("{0}: no data rows")]
    EmptyFile(PathBuf),
    #[error("line {line}: {reason}")]
    BadRecord { line: u64, reason: String },
    #[error("not a TGL1 checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint payload is truncated")]
    TruncatedPayload,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("fraction {0} is not listed in the run configuration")]
    FractionNotConfigured(f64),
    #[error("no raw values for {0}")]
    MissingRaw(String),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }

    /// Process exit code: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::FractionNotConfigured(_) => 2,
            LabError::Core(CoreError::NumericFailure(_)) => 4,
            LabError::Core(CoreError::InvalidConfig(_) | CoreError::InvalidSpec(_) | CoreError::RatioSumInvalid) => 2,
            _ => 3,
        }
    }
}
