use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("no usable records after cleaning")]
    NoUsableRecords,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("projection accuracy error: point is {distance_km:.1} km from origin (limit {limit_km} km)")]
    Projection { distance_km: f64, limit_km: f64 },

    #[error("model spec error: {0}")]
    Spec(String),

    #[error("unseen level '{level}' for categorical variable '{variable}'")]
    UnseenLevel { variable: String, level: String },

    #[error("no comparables of type '{0}' in the pool")]
    NoComparables(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's one-line error format.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::NoUsableRecords => "no_usable_records",
            Error::Config(_) => "config",
            Error::Parameter(_) => "parameter",
            Error::Projection { .. } => "projection",
            Error::Spec(_) => "spec",
            Error::UnseenLevel { .. } => "unseen_level",
            Error::NoComparables(_) => "no_comparables",
            Error::Degenerate(_) => "degenerate",
            Error::NonFinite(_) => "non_finite",
            Error::LinAlg(_) => "linalg",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
