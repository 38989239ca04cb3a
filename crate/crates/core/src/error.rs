use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in `{segment}`: expected {expected}, got {got}")]
    Dimension {
        segment: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid lambda specification: {0}")]
    InvalidLambda(String),

    #[error("invalid model specification: {0}")]
    InvalidModel(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate point: {0}")]
    Degenerate(String),

    #[error("degenerate feature vector: all entries equal, layer normalization undefined")]
    DegenerateFeature,

    #[error("not separable yet: loss {loss:e} is above the threshold {threshold:e}")]
    NotSeparable { loss: f64, threshold: f64 },

    #[error("not yet separating: minimum margin {q_min} is not positive")]
    NotSeparating { q_min: f64 },

    #[error("stationary point: velocity vanishes")]
    Stationary,

    #[error("no separating hyperplane found (best normalized margin {best_margin})")]
    NoSeparatingHyperplane { best_margin: f64 },

    #[error("conditional separability violated: r = {r} <= rho_mu = {rho_mu}")]
    ConditionalSeparabilityViolated { r: f64, rho_mu: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(segment: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            segment: segment.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}
