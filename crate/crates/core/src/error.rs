use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FgfError {
    #[error("{name} = {value} is outside its admissible range {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("singular parameters: {0}")]
    Singular(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} (target {target:e})")]
    Quadrature {
        estimate: f64,
        error: f64,
        target: f64,
    },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("kernel mass {mass} differs from 1 (tolerance {tol:e})")]
    Mass { mass: f64, tol: f64 },

    #[error("domain {0}")]
    BadDomain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("joint dimension {dim} exceeds the Cholesky cap {cap}; use a coarser grid or fewer Hurst values")]
    GramTooLarge { dim: usize, cap: usize },

    #[error("Cholesky failed after jitter {jitter:e}: diagonal range [{min_diag:e}, {max_diag:e}], pivot ratio estimate {cond:e}")]
    NotPositiveDefinite {
        jitter: f64,
        min_diag: f64,
        max_diag: f64,
        cond: f64,
    },

    #[error("draw lacks Hurst value {0}")]
    MissingHurst(f64),
}

pub type Result<T> = std::result::Result<T, FgfError>;
