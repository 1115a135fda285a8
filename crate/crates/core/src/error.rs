use thiserror::Error;

/// Errors produced by the LDM library.
#[derive(Debug, Error)]
pub enum LdmError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("more than two distinct labels ({labels})")]
    TooManyLabels { labels: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error(
        "Q is not positive definite after adding a ridge of {ridge:e} \
         (ridge_scale = {ridge_scale:e}); retry with a larger ridge_scale"
    )]
    Factorization { ridge: f64, ridge_scale: f64 },

    #[error("{what}: m = {m} exceeds the cap of {cap}")]
    TooLarge { what: &'static str, m: usize, cap: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LdmError>;
