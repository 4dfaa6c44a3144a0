use thiserror::Error;

/// Errors produced by the numerical core, the planner and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("conditioning block is singular (smallest pivot {pivot:e})")]
    SingularConditioning { pivot: f64 },

    #[error("matrix is not positive definite after jitter")]
    SingularMatrix,

    #[error("innovation covariance is not invertible")]
    SingularInnovation,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate geometry: target horizontally coincident with sensor")]
    DegenerateGeometry,

    #[error("iteration cap of {cap} exceeded")]
    IterationCapExceeded { cap: usize },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
