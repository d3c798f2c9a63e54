//! Spin-1/2 and Pauli operators on the two-qubit space.

use num_complex::Complex;

use crate::linalg::{kron2, Mat2, Mat4};
use crate::scalar::Real;

pub fn pauli<T: Real>(index: usize) -> Mat2<T> {
    let z = T::zero();
    let o = T::one();
    let c = |re: T, im: T| Complex::new(re, im);
    match index {
        0 => Mat2::identity(),
        1 => Mat2 { m: [[c(z, z), c(o, z)], [c(o, z), c(z, z)]] },
        2 => Mat2 { m: [[c(z, z), c(z, -o)], [c(z, o), c(z, z)]] },
        3 => Mat2 { m: [[c(o, z), c(z, z)], [c(z, z), c(-o, z)]] },
        _ => panic!("pauli index {index} out of range"),
    }
}

/// `sigma_i (x) sigma_j`, electron first; 0 = identity, 1..3 = x, y, z.
pub fn pauli2<T: Real>(i: usize, j: usize) -> Mat4<T> {
    kron2(&pauli(i), &pauli(j))
}

pub const PAULI_NAMES: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// Electron spin component `S_axis` (axis 0..3 = x, y, z).
pub fn s<T: Real>(axis: usize) -> Mat4<T> {
    kron2(&pauli::<T>(axis + 1).scale_re(T::lit(0.5)), &Mat2::identity())
}

/// Nuclear spin component `I_axis`.
pub fn i<T: Real>(axis: usize) -> Mat4<T> {
    kron2(&Mat2::identity(), &pauli::<T>(axis + 1).scale_re(T::lit(0.5)))
}

/// Projector onto electron up.
pub fn electron_up<T: Real>() -> Mat4<T> {
    Mat4::from_real_diag([T::one(), T::one(), T::zero(), T::zero()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_commutation_relation() {
        let lhs = s::<f64>(0).commutator(&s(1));
        let rhs = s::<f64>(2).scale(Complex::new(0.0, 1.0));
        assert!((lhs - rhs).norm() < 1e-15);
        let lhs = i::<f64>(1).commutator(&i(2));
        let rhs = i::<f64>(0).scale(Complex::new(0.0, 1.0));
        assert!((lhs - rhs).norm() < 1e-15);
        assert!(s::<f64>(0).commutator(&i(0)).norm() < 1e-15);
    }
}
