use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive {field} ({value}) at row {row}")]
    NonPositiveField {
        row: usize,
        field: &'static str,
        value: f64,
    },

    #[error("ticks are not sorted by time at row {row}")]
    UnsortedInput { row: usize },

    #[error("security {security} has no trades in bucket {bucket}")]
    EmptyBucket { security: String, bucket: usize },

    #[error("unknown security {0}")]
    UnknownSecurity(String),

    #[error("security {0} is missing")]
    MissingSecurity(String),

    #[error("security {0} did not trade in the averaging window")]
    ZeroTotalVolume(String),

    #[error("series length mismatch: expected {expected}, found {found}")]
    MismatchedLength { expected: usize, found: usize },

    #[error("empty list")]
    EmptyList,

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("weights sum to zero")]
    ZeroWeightSum,

    #[error("investment weights sum to {0}, expected 1")]
    WeightSumError(f64),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("infeasible generator targets: {0}")]
    InfeasibleTargets(String),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid portfolio: {0}")]
    InvalidPortfolio(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI's structured errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveField { .. } => "NonPositiveField",
            Error::UnsortedInput { .. } => "UnsortedInput",
            Error::EmptyBucket { .. } => "EmptyBucket",
            Error::UnknownSecurity(_) => "UnknownSecurity",
            Error::MissingSecurity(_) => "MissingSecurity",
            Error::ZeroTotalVolume(_) => "ZeroTotalVolume",
            Error::MismatchedLength { .. } => "MismatchedLength",
            Error::EmptyList => "EmptyList",
            Error::DegenerateSeries(_) => "DegenerateSeries",
            Error::ZeroWeightSum => "ZeroWeightSum",
            Error::WeightSumError(_) => "WeightSumError",
            Error::DomainError(_) => "DomainError",
            Error::InfeasibleTargets(_) => "InfeasibleTargets",
            Error::InvalidWindow(_) => "InvalidWindow",
            Error::InvalidPortfolio(_) => "InvalidPortfolio",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::Parse { .. } => "ParseError",
            Error::Io(_) => "IoError",
        }
    }
}
