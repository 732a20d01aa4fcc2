use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("integer overflow computing signature length for dim {dim}, order {order}")]
    Overflow { dim: usize, order: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `I - rho W` has a (numerically) zero pivot.
    #[error("I - rho W is singular at rho = {rho}")]
    Singular { rho: f64 },

    #[error("det(I - rho W) is negative at rho = {rho}")]
    NegativeDeterminant { rho: f64 },

    #[error("ridge system is ill-conditioned (condition estimate {condition:.3e}); use lambda > 0")]
    IllConditioned { condition: f64 },

    #[error("rank-deficient matrix: {0}")]
    RankDeficient(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("selection failed, every grid point errored:\n{0}")]
    SelectionFailed(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("manifest parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("manifest write error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}
