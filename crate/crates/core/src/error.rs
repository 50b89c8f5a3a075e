use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("input contains no data rows")]
    Empty,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("column {column} has every cell missing")]
    AllMissing { column: usize },

    #[error("negative count {value} at sample {sample}, column {column}")]
    NegativeCount {
        sample: usize,
        column: usize,
        value: i64,
    },

    #[error("every column is constant; there is no correlation to explain")]
    AllColumnsConstant,

    #[error("joint state space of {states} exceeds the enumeration guard of {limit}; use a sampled estimate instead")]
    StateSpaceTooLarge { states: u128, limit: u128 },

    #[error("expected a joint table over {expected} variables, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unseen category {code} in column {column} (training cardinality {cardinality})")]
    UnseenCategory {
        column: String,
        code: String,
        cardinality: usize,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("labeling is not binary: found value {0}")]
    NotBinary(usize),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
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
