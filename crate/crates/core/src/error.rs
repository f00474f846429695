use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("dangling references: {}", .paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    DanglingReference { paths: Vec<PathBuf> },

    #[error("duplicate tile id `{0}`")]
    DuplicateTile(String),

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid class value {0}")]
    InvalidClass(u32),

    #[error("palette has no color for class {0}")]
    IncompletePalette(&'static str),

    #[error("color {0:?} is not in the palette")]
    UnknownColor([u8; 3]),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("cannot aggregate an empty set of reports")]
    EmptyAggregate,

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
