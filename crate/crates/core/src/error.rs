use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("input contains no data rows")]
    Empty,

    #[error("row {row} has no observed values; every observation needs at least one measurement")]
    AllMissingRow { row: usize },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Normal equations are singular or the fit has no residual degrees of
    /// freedom. With too many missing values not every parametric function
    /// is estimable.
    #[error("singular system ({0}); too many missing values can leave parameters non-estimable")]
    Singular(String),

    #[error("predictor `{variable}` is missing at row {row}; use the concatenated (nls) estimator")]
    MissingPredictor { variable: String, row: usize },

    #[error("variable `{0}` is missing in every row and cannot be identified")]
    Unidentifiable(String),

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("unsupported constraint: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bootstrap aborted: {discarded} of {attempted} replicates discarded")]
    BootstrapAborted { attempted: usize, discarded: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Parse { .. } => "parse",
            Error::Empty => "empty",
            Error::AllMissingRow { .. } => "all-missing-row",
            Error::UnknownVariable(_) => "unknown-variable",
            Error::Dimension { .. } => "dimension",
            Error::Singular(_) => "singular",
            Error::MissingPredictor { .. } => "missing-predictor",
            Error::Unidentifiable(_) => "unidentifiable",
            Error::Infeasible(_) => "infeasible",
            Error::Unsupported(_) => "unsupported",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::BootstrapAborted { .. } => "bootstrap-aborted",
            Error::Json(_) => "json",
        }
    }
}
