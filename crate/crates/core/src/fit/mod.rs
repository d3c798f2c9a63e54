//! Least-squares fits and spectral estimation used by the protocols.

mod lm;
mod models;
mod spectrum;

pub use lm::{levenberg_marquardt, numeric_jacobian, Bounds, LmOptions, LmOutcome};
pub use models::{
    fit_damped_cosine, fit_power_law, fit_stretched_exponential, fit_stretched_exponential_fixed_offset,
    FitModel, FitParameter, FitResult, STRETCH_BOUNDS,
};
pub use spectrum::{dft_peak, spectrum_and_linewidth, SpectrumResult};
