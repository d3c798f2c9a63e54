//! Two-qubit state tomography with electron readout: Pauli-product settings,
//! simulated counts, linear inversion and maximum-likelihood reconstruction.

mod reconstruct;
mod settings;

pub use reconstruct::{
    estimate_from, format_density_matrix, inversion_residual, linear_inversion, log_likelihood, mle_reconstruct,
    parse_density_matrix, project_to_physical, pseudo_pure_decomposition, pseudo_pure_fidelity, PseudoPure,
    UnconstrainedEstimate, MLE_GRADIENT_TOL, MLE_MAX_ITERATIONS,
};
pub use settings::{
    gram_rank, measurement_matrix, measurement_settings, simulate_tomography, MeasurementSetting, NoisyPulses, Shots,
    TomogramData, PAULI_NAMES,
};
