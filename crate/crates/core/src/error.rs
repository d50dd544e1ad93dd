use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: item index {index} out of range for {num_items} items")]
    IndexOutOfRange { row: usize, index: usize, num_items: usize },
    #[error("row {row}: item compared with itself ({index})")]
    SelfComparison { row: usize, index: usize },
    #[error("row {row}: tie label (0) is not supported")]
    TieLabel { row: usize },
    #[error("row {row}: invalid label {label}, expected 1 or -1")]
    InvalidLabel { row: usize, label: String },
    #[error("row {row}: invalid count {count}")]
    InvalidCount { row: usize, count: String },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dataset has no comparisons")]
    EmptyDataset,
    #[error("brute-force search supports at most {max} items, got {got}")]
    TooManyItems { max: usize, got: usize },
    #[error("scalar prox failed to converge (x~={x_tilde}, w~={w_tilde})")]
    ProxNotConverged { x_tilde: f64, w_tilde: f64 },
    #[error("step size contract violated: tau*sigma*|A|^2 = {0}")]
    StepSize(f64),
    #[error("solver diverged at iteration {iteration}: cost {cost} vs minimum {min_cost}")]
    Diverged { iteration: usize, cost: f64, min_cost: f64 },
    #[error("iteration cap {0} reached without convergence")]
    IterationCap(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
