use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no singular value exceeds sqrt(kappa) = {threshold:.3e}; chart is degenerate")]
    DegenerateChart { threshold: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("singular value decomposition failed")]
    SvdFailure,

    #[error("factorization failed even after raising jitter to {0:e}")]
    Factorization(f64),

    #[error("invalid symbol {0:?} in peptide")]
    InvalidSymbol(char),

    #[error("peptide of length {len} exceeds maximum length {max}")]
    PeptideTooLong { len: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("search space of {0} sequences exceeds the exhaustive-search cap")]
    SearchSpaceTooLarge(u128),

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GeoError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        GeoError::InvalidParameter(msg.into())
    }

    /// Whether the failure comes from numerics rather than from user input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            GeoError::DegenerateChart { .. }
                | GeoError::NonFinite(_)
                | GeoError::SvdFailure
                | GeoError::Factorization(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, GeoError>;
