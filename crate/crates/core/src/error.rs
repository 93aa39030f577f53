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

    #[error("empty file")]
    EmptyFile,

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("missing {what} at row {row}")]
    MissingValue { what: String, row: usize },

    #[error("non-numeric value '{value}' in column '{column}' at row {row}")]
    NonNumeric { column: String, row: usize, value: String },

    #[error("treatment not binary: value '{value}' at row {row}")]
    TreatmentNotBinary { row: usize, value: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("separation detected in logistic fit (implicated: {implicated:?})")]
    SeparationDetected { implicated: Vec<String> },

    #[error("rank-deficient design matrix ({0})")]
    RankDeficientDesign(String),

    #[error("maximum iterations ({max_iter}) exceeded; score norm {score_norm:e}")]
    MaxIterationsExceeded { max_iter: usize, score_norm: f64 },

    #[error("outcome model did not converge: {0}")]
    OutcomeModelNonConvergence(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("arm mean on the boundary (mu1 = {mu1}, mu0 = {mu0}); ratio estimand undefined")]
    BoundaryMean { mu1: f64, mu0: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("estimand {estimand} requires binary outcome")]
    EstimandRequiresBinary { estimand: String },

    #[error("scenario error: {0}")]
    Scenario(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Short stable label for counting failures by type.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::EmptyFile => "empty_file",
            Error::MissingColumn(_) => "missing_column",
            Error::MissingValue { .. } => "missing_value",
            Error::NonNumeric { .. } => "non_numeric",
            Error::TreatmentNotBinary { .. } => "treatment_not_binary",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SeparationDetected { .. } => "separation",
            Error::RankDeficientDesign(_) => "rank_deficient",
            Error::MaxIterationsExceeded { .. } => "max_iterations",
            Error::OutcomeModelNonConvergence(_) => "outcome_nonconvergence",
            Error::DegenerateWeights(_) => "degenerate_weights",
            Error::BoundaryMean { .. } => "boundary_mean",
            Error::SingularMatrix(_) => "singular_matrix",
            Error::EstimandRequiresBinary { .. } => "estimand_requires_binary",
            Error::Scenario(_) => "scenario",
        }
    }
}
