//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },

    #[error("{} row(s) failed to parse: {}", .0.len(), format_row_errors(.0))]
    RowParse(Vec<(usize, String)>),

    #[error("unknown label `{label}` for feature `{feature}`")]
    UnknownLabel { feature: String, label: String },

    #[error("degenerate normalization bounds: min {min} >= max {max}")]
    DegenerateBounds { min: f64, max: f64 },

    #[error("dataset is empty after cleaning")]
    EmptyAfterCleaning,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),

    #[error("actual value at index {index} is zero; plain MAPE is undefined, use the shifted variant")]
    ZeroActual { index: usize },

    #[error("shifted denominator is zero at index {index}")]
    ZeroShiftedDenominator { index: usize },

    #[error("zero variance in {0}; correlation is undefined")]
    ZeroVariance(&'static str),

    #[error("all predictions are zero; the prediction-normalized R^2 is undefined")]
    AllZeroPredictions,

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("model file invalid: {0}")]
    ModelFormat(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("no candidate produced a usable result: {0}")]
    NoUsableCandidate(String),
}

impl Error {
    /// Exit-code class for the CLI: 1 for input/validation problems,
    /// 2 for failures that occur while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Csv(_)
            | Error::HeaderMismatch { .. }
            | Error::RowParse(_)
            | Error::UnknownLabel { .. }
            | Error::DegenerateBounds { .. }
            | Error::EmptyAfterCleaning
            | Error::InvalidParam(_)
            | Error::LengthMismatch { .. }
            | Error::ShapeMismatch(_)
            | Error::ZeroActual { .. }
            | Error::ZeroShiftedDenominator { .. }
            | Error::ZeroVariance(_)
            | Error::AllZeroPredictions
            | Error::ModelFormat(_)
            | Error::Config(_) => 1,
            Error::NonFiniteLoss { .. } | Error::NoUsableCandidate(_) => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::ModelFormat(e.to_string())
    }
}

fn format_row_errors(errors: &[(usize, String)]) -> String {
    let shown: Vec<String> = errors
        .iter()
        .take(5)
        .map(|(row, msg)| format!("row {row}: {msg}"))
        .collect();
    let mut out = shown.join("; ");
    if errors.len() > 5 {
        out.push_str(&format!("; ... and {} more", errors.len() - 5));
    }
    out
}
