use std::path::PathBuf;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f32 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension {dim} = {value} is not a multiple of the 32-element block size")]
    NotBlockAligned { dim: &'static str, value: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("context overflow: {needed} positions requested, model holds at most {max}")]
    ContextOverflow { needed: usize, max: usize },

    #[error("cannot roll back cache of length {len} to {to}")]
    Rollback { len: usize, to: usize },

    #[error("token id {token} outside vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("model stores MXFP4 linears; expected reference-float weights")]
    AlreadyQuantized,

    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },

    #[error("unsupported format version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("truncated payload: expected {expected} bytes, got {got}")]
    Truncated { expected: u64, got: u64 },

    #[error("payload length {payload} does not match shape {rows}x{cols} ({expected} bytes)")]
    PayloadMismatch {
        rows: u64,
        cols: u64,
        payload: u64,
        expected: u64,
    },

    #[error("unknown {what} tag {tag}")]
    UnknownTag { what: &'static str, tag: u8 },

    #[error("missing tensor section `{0}`")]
    MissingTensor(String),

    #[error("unexpected tensor section `{0}`")]
    UnexpectedTensor(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
