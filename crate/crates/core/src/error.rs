use std::path::PathBuf;

use crate::cnn::TrainHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes shared by the CLI and [`Error::exit_code`].
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const CONFIG: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("non-finite sample at row {row}, channel {channel}")]
    NonFiniteSample { row: usize, channel: usize },

    #[error("expected {expected} channels, found {found}")]
    ChannelCountMismatch { expected: usize, found: usize },

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("index {index} + length {len} exceeds available {available}")]
    OutOfRange {
        index: usize,
        len: usize,
        available: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("unknown channel {0:?}")]
    UnknownChannel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("synchronization pulse pattern not found")]
    PatternNotFound,

    #[error("recordings do not overlap after synchronization")]
    ZeroOverlap,

    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),

    #[error("filter is unstable: pole magnitude {0}")]
    UnstableFilter(f64),

    #[error("covariance is rank deficient: rank {rank}, need {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("input has zero variance")]
    ZeroVariance,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged {
        epoch: usize,
        history: Box<TrainHistory>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Maps the error onto the CLI exit-code contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::NonFiniteSample { .. }
            | Error::ChannelCountMismatch { .. }
            | Error::InvalidRecording(_)
            | Error::OutOfRange { .. }
            | Error::EmptyDataset
            | Error::LengthMismatch { .. }
            | Error::UnknownLabel(_)
            | Error::UnknownChannel(_)
            | Error::ShapeMismatch { .. }
            | Error::SampleRateMismatch(..)
            | Error::Json(_) => exit::INPUT,
            Error::PatternNotFound
            | Error::ZeroOverlap
            | Error::UnstableFilter(_)
            | Error::RankDeficient { .. }
            | Error::ZeroVariance
            | Error::DimensionMismatch(_)
            | Error::Diverged { .. } => exit::NUMERICAL,
            Error::InvalidParameter(_) | Error::Config(_) => exit::CONFIG,
        }
    }
}
