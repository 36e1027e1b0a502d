use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("infeasible likelihood: observation {index} (k = {k}) lies outside the support")]
    InfeasibleLikelihood { index: usize, k: u64 },

    #[error("degraded rank: {0}")]
    DegradedRank(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("missing covariate `{0}`")]
    MissingCovariate(String),

    #[error("too few exceedances: {found} (need at least {required})")]
    TooFewExceedances { found: usize, required: usize },

    #[error("quantile at level 1 is unbounded")]
    UnboundedQuantile,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("schema version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } => 3,
            _ => 2,
        }
    }
}
