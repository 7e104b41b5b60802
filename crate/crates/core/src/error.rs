use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate record id {id:?}")]
    DuplicateId { id: String },

    #[error("duplicate segment name {0:?}")]
    DuplicateSegment(String),

    #[error("record {id:?} references vector row {index} but the block has {count} rows")]
    VectorIndexOutOfRange { id: String, index: u64, count: u64 },

    #[error("malformed manifest line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("requested {requested} components but the centered data has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("need at least {k} samples for {k} clusters, got {n}")]
    TooFewSamples { n: usize, k: usize },

    #[error("only {distinct} distinct points available for {k} clusters")]
    TooFewDistinct { distinct: usize, k: usize },

    #[error("city {city:?} has {available} records, needs {required} (short by {})", required - available)]
    InsufficientRecords {
        city: String,
        available: usize,
        required: usize,
    },

    #[error("codeword vectors disagree: {0}")]
    Incompatible(String),

    #[error("period sequence is not consecutive: {0}")]
    PeriodGap(String),

    #[error("label {0:?} was not seen during training")]
    UnseenLabel(String),

    #[error("codeword vector for {0:?} has zero support")]
    ZeroSupport(String),

    #[error("infeasible planted shift: {0}")]
    InfeasibleShift(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input data or parameters, as opposed to
    /// I/O failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
