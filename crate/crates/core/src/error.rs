use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("label {0} present in batch has zero class probability")]
    ZeroClassProbability(usize),
    #[error("cached forward state does not match gradient shape: {0}")]
    StaleCache(String),
    #[error("buffer overflow: {0}")]
    Overflow(String),
    #[error("buffer not full: {have}/{want}")]
    NotFull { have: usize, want: usize },
    #[error("label {0} is not eligible for generation")]
    IneligibleLabel(usize),
    #[error("covariance for label {0} is not positive semidefinite")]
    NonPsd(usize),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("no idle client available for dispatch")]
    NoIdleClient,
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("bad IDX magic number: expected {expected:#010x}, got {got:#010x}")]
    BadMagic { expected: u32, got: u32 },
    #[error("truncated IDX file: {0}")]
    TruncatedFile(String),
    #[error("IDX image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("config parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("config validation failed: {0}")]
    ValidationError(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint version mismatch: expected {expected}, got {got}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("checkpoint config hash mismatch")]
    ConfigHashMismatch,
    #[error("checkpoint decode error: {0}")]
    CheckpointDecode(String),
}

impl Error {
    /// Process exit code contract: 2 for config problems, 3 for numeric aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ParseError { .. } | Error::ValidationError(_) => 2,
            Error::NonFinite(_) | Error::NonPsd(_) => 3,
            _ => 1,
        }
    }
}
