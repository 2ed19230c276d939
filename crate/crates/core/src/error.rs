use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("degenerate polyline: {0}")]
    DegeneratePolyline(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("cannot encode: {0}")]
    Encode(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("parse error in item {index}: {message}")]
    ParseItem { index: usize, message: String },

    #[error("unknown class label `{0}`")]
    UnknownClass(String),

    #[error("roadgraph has {dropped} more polylines than the configured maximum")]
    Truncation { dropped: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("horizon {horizon}s is not covered: {message}")]
    Horizon { horizon: f64, message: String },

    #[error("time {time}s is not on the timestamp grid (dt = {dt}s)")]
    Grid { time: f64, dt: f64 },

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("invalid cluster or sample count: {0}")]
    InvalidK(String),

    #[error("mixture has no datasets")]
    EmptyMixture,

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn parse_item(index: usize, message: impl Into<String>) -> Self {
        Error::ParseItem {
            index,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
