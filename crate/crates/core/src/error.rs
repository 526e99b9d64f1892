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

    #[error("no rows")]
    NoRows,

    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: cannot parse {value:?} as a finite number")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("batch size {b} out of range for n = {n}: {reason}")]
    BatchSize { b: usize, n: usize, reason: String },

    #[error("flat-top requires even b (got {0})")]
    OddFlatTop(usize),

    #[error("no MSE constants for the {0} window")]
    UnsupportedConstants(&'static str),

    #[error("no correlation defined: every component is constant")]
    AllConstant,

    #[error("component {component} is constant")]
    ConstantComponent { component: usize },

    #[error("no correlation cutoff found up to lag {cap}")]
    NoCutoff { cap: usize },

    #[error("autoregressive fit failed: {0}")]
    ArFit(String),

    #[error("component {component}: {source}")]
    Component {
        component: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-stationary fit: sum of coefficients {0} >= 1")]
    NonStationary(f64),

    #[error("all pilot variances are zero")]
    ZeroPilot,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("linear system is singular or ill-conditioned")]
    Singular,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::NoRows => "no_rows",
            Error::RaggedRow { .. } => "ragged_row",
            Error::Parse { .. } => "parse",
            Error::Csv(_) => "csv",
            Error::InvalidChain(_) => "invalid_chain",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::BatchSize { .. } => "batch_size",
            Error::OddFlatTop(_) => "odd_flat_top",
            Error::UnsupportedConstants(_) => "unsupported_constants",
            Error::AllConstant => "all_constant",
            Error::ConstantComponent { .. } => "constant_component",
            Error::NoCutoff { .. } => "no_cutoff",
            Error::ArFit(_) => "ar_fit",
            Error::Component { source, .. } => source.code(),
            Error::NonStationary(_) => "non_stationary",
            Error::ZeroPilot => "zero_pilot",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::Singular => "singular",
            Error::Dimension { .. } => "dimension",
            Error::Config(_) => "config",
            Error::Json(_) => "json",
        }
    }
}
