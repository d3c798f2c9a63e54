//! Pulse-level simulation of a hyperfine-coupled electron / 13C spin pair.
//!
//! Frequencies are in MHz, times in us, fields in tesla. The two-qubit basis is
//! ordered `[up_e up_n, up_e dn_n, dn_e up_n, dn_e dn_n]` throughout.
//!
//! ```
//! use spinlab::{build_hamiltonian, transition_table, SystemConfig64, TransitionLabel};
//!
//! let cfg = SystemConfig64::hbn_default();
//! let h = build_hamiltonian(&cfg).unwrap();
//! let table = transition_table(&h, &cfg).unwrap();
//! let rf1 = table.get(TransitionLabel::Rf1);
//! assert!((rf1.frequency - 141.0).abs() < 0.5);
//! ```

// index loops mirror the matrix algebra; negated comparisons also reject NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fit;
pub mod linalg;
pub mod noise;
pub mod protocols;
pub mod pulse;
pub mod scalar;
pub mod spin;
pub mod tomography;

pub use error::{Result, SpinLabError};
pub use spin::{
    bell_state, build_hamiltonian, fidelity, partial_trace, pauli_expectations, transition_table, BellKind,
    Channel, DensityMatrix, Hamiltonian, HyperfineTensor, Qubit, SystemConfig, Transition, TransitionLabel,
    TransitionTable,
};

pub type DensityMatrix4 = DensityMatrix<f64>;
pub type DensityMatrix4f = DensityMatrix<f32>;
pub type Hamiltonian4 = Hamiltonian<f64>;
pub type Hamiltonian4f = Hamiltonian<f32>;
pub type SystemConfig64 = SystemConfig<f64>;
pub type SystemConfig32 = SystemConfig<f32>;
pub type TransitionTable4 = TransitionTable<f64>;
