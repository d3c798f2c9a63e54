//! Static physics of the electron-nuclear pair: operators, the two-spin
//! Hamiltonian, its transition spectrum, and two-qubit state metrics.
//!
//! Basis ordering is fixed everywhere as `[up_e up_n, up_e dn_n, dn_e up_n, dn_e dn_n]`.

mod config;
mod hamiltonian;
mod hyperfine_fit;
pub mod operators;
mod state;
mod transitions;

pub use config::{HyperfineTensor, SystemConfig, BASIS_LABELS};
pub use hamiltonian::{build_hamiltonian, drive_operator, Channel, DressedBasis, Hamiltonian};
pub use hyperfine_fit::{fit_hyperfine, HyperfineFit, SpectrumTargets};
pub use state::{
    bell_state, fidelity, from_pauli, partial_trace, pauli_expectations, BellKind, DensityMatrix, Qubit,
};
pub use transitions::{transition_table, Transition, TransitionLabel, TransitionTable};
