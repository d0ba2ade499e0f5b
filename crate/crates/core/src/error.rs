use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFiniteInput(String),

    #[error("precision matrix is not positive definite (rank-deficient design with a_n = 0?)")]
    SingularSystem,

    #[error("error scale is degenerate: {0} is not positive")]
    DegenerateScale(f64),

    #[error("quadratic term has non-positive diagonal at coordinate {0}")]
    DegenerateDiagonal(usize),

    #[error("solver did not converge after {sweeps} sweeps (KKT residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("replication {rep}: {source}")]
    Replication {
        rep: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
