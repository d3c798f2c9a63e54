//! Fixed-size dense complex matrices for two-level and four-level systems.

mod cmat;
mod eigen;
mod expm;

pub use cmat::{kron2, CMat, Mat2, Mat4};
pub use eigen::{eigh, sqrtm_psd, HermitianEigen};
pub use expm::{expm, unitary_step};
