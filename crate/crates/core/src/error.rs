use thiserror::Error;

/// Errors raised by the optimizer, the analysis toolkit and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    Asymmetric { asymmetry: f64 },

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("rank-deficient input: column {column} has residual norm {norm:e}")]
    RankDeficient { column: usize, norm: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("problem too large for exhaustive search: n = {n} (limit {limit})")]
    SizeLimit { n: usize, limit: usize },

    #[error("memory audit failed for category `{category}`: counted {counted}, expected {expected}")]
    Audit {
        category: String,
        counted: usize,
        expected: usize,
    },

    #[error("invariant violated at step {step}: {what}")]
    Invariant { step: usize, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
