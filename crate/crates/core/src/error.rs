use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated stream while reading {what}")]
    Truncated { what: String },

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("sample {sample}: {message}")]
    InvalidSample { sample: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("architecture syntax error at byte {position}: {message}")]
    ArchSyntax { position: usize, message: String },

    #[error("batch normalization in train mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),

    #[error("attention pooling needs at least one frame")]
    NoFrames,

    #[error("gradient check requires a deterministic configuration: {0}")]
    NonDeterministic(String),

    #[error("backward pass without a matching train-mode forward pass")]
    MissingForward,

    #[error("weight file was saved for {saved}, but {expected} was requested")]
    SpecMismatch { saved: String, expected: String },

    #[error("class has no positive samples")]
    NoPositives,

    #[error("class has no negative samples")]
    NoNegatives,

    #[error("AUC {0} is outside the open interval (0, 1)")]
    AucOutOfRange(f64),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
