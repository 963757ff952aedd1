use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("degenerate feature `{0}`: column is constant")]
    DegenerateFeature(String),

    #[error("not on the Stiefel manifold: ‖VᵀV − I‖_F = {residual:e}")]
    NotOrthonormal { residual: f64 },

    #[error("retraction failed: V + tξ is rank deficient (|R_jj| = {min_diag:e})")]
    RetractionFailure { min_diag: f64 },

    #[error(
        "solver stalled after {iterations} inner iterations: line search failed \
         (‖grad Q‖ = {grad_norm:e}, Q = {objective:e}, last step {last_step:e})"
    )]
    SolverStall {
        iterations: usize,
        grad_norm: f64,
        objective: f64,
        last_step: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: String,
        message: String,
    },

    #[error("stratified split failed: {0}")]
    Stratification(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
