use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("eigensolver did not converge after {iterations} sweeps")]
    EigFailure { iterations: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix exponential overflow: eigenvalue {0} exceeds cap")]
    Overflow(f64),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("karcher mean did not converge, tangent residual {residual:e}")]
    MeanFailure { residual: f64 },

    #[error("stiefel retraction failed: {0}")]
    Retraction(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("split leaves no training windows after purging")]
    EmptySplit,

    #[error("basket return volatility is zero")]
    ZeroVolatility,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("cannot parse cell at row {row}, column {col}: {value:?}")]
    UnparseableCell { row: usize, col: usize, value: String },

    #[error("dates are not strictly increasing at row {row}")]
    NonMonotonicDates { row: usize },

    #[error("non-positive price for {ticker} at row {row}")]
    NonPositivePrice { ticker: String, row: usize },

    #[error("every asset was dropped during cleaning")]
    AllAssetsDropped,

    #[error("portfolio optimizer did not converge, KKT residual {residual:e}")]
    OptFailure { residual: f64 },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 = configuration, 3 = data, 4 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::EigFailure { .. }
            | Error::Domain(_)
            | Error::Overflow(_)
            | Error::MeanFailure { .. }
            | Error::Retraction(_)
            | Error::TrainingDiverged { .. }
            | Error::OptFailure { .. } => 4,
            _ => 3,
        }
    }
}
