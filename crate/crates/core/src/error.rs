use crate::lattice::Cube;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cube {cube} is deeper than the model depth {depth}")]
    LevelOutOfRange { cube: Cube, depth: u32 },

    #[error("cube index {index} out of range for level {level}")]
    IndexOutOfRange { level: u32, index: u64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("depth mismatch: expected {expected}, got {actual}")]
    DepthMismatch { expected: u32, actual: u32 },

    #[error("family is not sparse: union fraction {fraction} inside {worst}")]
    NotSparse { worst: Cube, fraction: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("depth {depth} exceeds the dense-matrix limit {limit}; use direct operator application")]
    DenseLimit { depth: u32, limit: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
