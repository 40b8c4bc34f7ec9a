use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("layer tables do not match: {0}")]
    TableMismatch(String),

    #[error("mixing level {m} out of range 0..={max}")]
    MixLevelOutOfRange { m: usize, max: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown character id `{id}`; available: {available:?}")]
    UnknownCharacterId { id: String, available: Vec<String> },

    #[error("character bank was built for generator {expected} but got {actual}")]
    FingerprintMismatch { expected: String, actual: String },

    #[error("per-id image deficit (need k={k}): {deficits:?}")]
    BankDeficit {
        k: usize,
        deficits: Vec<(String, usize)>,
    },

    #[error("non-finite loss at step {step}: {value}")]
    NonFiniteLoss { step: usize, value: f32 },

    #[error("archive format error: {0}")]
    Archive(String),

    #[error("batch item {index} failed: {source}")]
    BatchItem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image decode/encode error: {0}")]
    Image(#[from] image::ImageError),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
