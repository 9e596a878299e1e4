use std::path::PathBuf;

/// Errors produced by the forecasting and analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dataset file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("dataset file is empty: {}", .0.display())]
    EmptyFile(PathBuf),

    #[error("non-numeric cell at ({row}, {col})")]
    NonNumericCell { row: usize, col: usize },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("ratios must sum to 1 (got {0})")]
    BadSplitRatio(f64),

    #[error("{split} split has {len} points, needs at least {needed} (lookback + horizon)")]
    SplitTooShort {
        split: &'static str,
        len: usize,
        needed: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite values produced at stage `{stage}`")]
    NonFinite { stage: &'static str },

    #[error("label pool has {available} instances but the class schedule needs {required}")]
    PoolTooSmall { available: usize, required: usize },

    #[error("cannot evaluate on an empty split")]
    EmptySplit,

    #[error("design matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("at least {required} Monte Carlo trials are needed, got {got}")]
    InsufficientTrials { required: usize, got: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
