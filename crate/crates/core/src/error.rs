use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of a model or operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "quadrature did not converge within {subdivisions} subdivisions \
         (estimate {estimate:e}, error estimate {error:e})"
    )]
    Quadrature {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    /// The up/down rate ratio of a bath is not above one, so it has no
    /// positive effective temperature.
    #[error("population inversion: rate ratio {ratio} <= 1")]
    Inverted { ratio: f64 },

    #[error(
        "time step too large for explicit stepping (dt * max rate = {stiffness:.3} >= 0.1); \
         reduce dt or use the implicit integrator"
    )]
    Stiff { stiffness: f64 },

    #[error("sideband weights sum to {sum}, expected 1 (increase the sideband cutoff)")]
    SidebandWeights { sum: f64 },

    #[error("population extraction failed: {reason} (residual rms {residual:e})")]
    Extraction { reason: String, residual: f64 },

    #[error("fit did not converge after {iterations} iterations (cost {cost:e}, last iterate {params:?})")]
    NonConvergence {
        iterations: usize,
        cost: f64,
        params: Vec<f64>,
    },

    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
