use thiserror::Error;

use crate::model::WorkloadCategory;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across signature generation, detection, and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("day index {day} out of range for horizon {horizon}")]
    DayOutOfRange { day: usize, horizon: usize },

    #[error("attribute `{0}` not present")]
    MissingAttribute(String),

    #[error("no trial data")]
    NoTrialData,

    #[error("uncovered days{}: {days:?}", category.as_ref().map(|c| format!(" for category {c}")).unwrap_or_default())]
    Uncovered {
        days: Vec<usize>,
        category: Option<WorkloadCategory>,
    },

    #[error("horizon mismatch: {left} vs {right}")]
    HorizonMismatch { left: usize, right: usize },

    #[error("window [{start}, {start}+{len}) exceeds horizon {horizon}")]
    WindowOutOfRange {
        start: usize,
        len: usize,
        horizon: usize,
    },

    #[error("empty window")]
    EmptyWindow,

    #[error("window length {0} < 2; shape similarity needs at least two points")]
    WindowTooShort(usize),

    #[error("empty cohort")]
    EmptyCohort,

    #[error("observations not sorted by window end (index {index})")]
    Unsorted { index: usize },

    #[error("non-finite value {0}")]
    NonFinite(f64),

    #[error("coverage impossible: {0}")]
    CoverageImpossible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    /// Coarse classification used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Self::Config(_) => ErrorKind::Config,
            Self::Io(_) => ErrorKind::Runtime,
            Self::Json(_) | Self::Csv(_) => ErrorKind::Data,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}
