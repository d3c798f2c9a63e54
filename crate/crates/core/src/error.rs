use thiserror::Error;

use crate::spin::DensityMatrix;

pub type Result<T, E = SpinLabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SpinLabError {
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("eigenvalues {gap:.3e} MHz apart; transitions cannot be classified")]
    Degenerate { gap: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time step {dt:.3e} us exceeds the limit {limit:.3e} us")]
    StepSize { dt: f64, limit: f64 },

    #[error("tone at {frequency:.4} MHz is not within {window} MHz of any transition")]
    Frame { frequency: f64, window: f64 },

    #[error("gate compilation failed: {0}")]
    Compile(String),

    #[error("dual-tone calibration failed: {0}")]
    Calibration(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("non-uniform sampling: {0}")]
    Sampling(String),

    #[error("tomography: {0}")]
    Tomography(String),

    #[error(
        "maximum-likelihood reconstruction stopped after {iterations} iterations \
         with gradient norm {gradient_norm:.3e}"
    )]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
        last: Box<DensityMatrix<f64>>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SpinLabError {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { key: key.into(), message: message.into() }
    }

    /// Machine-readable category, used for CLI exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Io(_) => "io",
            _ => "numeric",
        }
    }
}
