use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range for axis of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid axis {0}, expected 1, 2 or 3")]
    InvalidAxis(usize),

    #[error("{value} is not an odd prime")]
    NotPrime { value: u64 },

    #[error("entry {value} is not reduced modulo {prime}")]
    UnreducedEntry { value: u64, prime: u64 },

    #[error("matrix of size {rows}x{cols} exceeds the rational oracle cap of {cap} entries")]
    OracleCapExceeded { rows: usize, cols: usize, cap: usize },

    #[error("singular change-of-basis matrix for axis {axis}")]
    SingularBasisChange { axis: usize },

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("no k up to {max_k} reached full Jacobian rank for shape {shape}")]
    ResourceCap { shape: String, max_k: usize },

    #[error("rank-one-freeness check failed: {0}")]
    CheckFailed(String),

    #[error("could not draw independent matrices after {attempts} attempts")]
    IndependenceFailure { attempts: usize },

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
