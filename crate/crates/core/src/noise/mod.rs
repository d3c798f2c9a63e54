//! Electron dephasing noise, its filter-function decay, relaxation and
//! photon-count readout.

mod filter;
mod model;
mod readout;
mod record;
mod relaxation;

pub use filter::{
    cpmg_coherence_analytic, cpmg_sensitivity, cpmg_t2_analytic, cpmg_transverse_sensitivity, decoherence_functional, Piece, PulseTimes,
    QUADRATURE_ATOL, QUADRATURE_RTOL,
};
pub use model::{
    free_decay, sample_ou, NoiseModel, NoiseSampler, SpectrumShape, DEFAULT_SIGMA_MHZ, DEFAULT_TAU_C_US,
};
pub use readout::{sample_counts, simulate_readout, ReadoutModel, ReadoutSample};
pub use record::ExperimentRecord;
pub use relaxation::relaxation_channel;
