use super::model::NoiseModel;
use crate::linalg::Mat4;
use crate::scalar::Real;
use crate::spin::DensityMatrix;

/// Independent depolarizing relaxation of each qubit toward the maximally
/// mixed state: `<Z>` decays at `1/T1`, `<X>`, `<Y>` at `1/(2 T1)`.
pub fn relaxation_channel(rho: &DensityMatrix<f64>, duration: f64, model: &NoiseModel) -> DensityMatrix<f64> {
    if duration <= 0.0 {
        return *rho;
    }
    let ez = |t1: f64| if t1.is_finite() { (-duration / t1).exp() } else { 1.0 };
    let m = damp_qubit(rho.matrix(), ez(model.t1_electron), true);
    let m = damp_qubit(&m, ez(model.t1_nuclear), false);
    DensityMatrix::from_matrix_unchecked(m)
}

/// Applies the single-qubit channel with longitudinal factor `ez` to the
/// electron (`outer = true`) or nuclear factor of a 4x4 operator.
fn damp_qubit<T: Real>(m: &Mat4<T>, ez: T, outer: bool) -> Mat4<T> {
    if ez == T::one() {
        return *m;
    }
    let exy = ez.sqrt();
    let half = T::lit(0.5);
    let split = |k: usize| if outer { (k / 2, k % 2) } else { (k % 2, k / 2) };
    let join = |q: usize, r: usize| if outer { 2 * q + r } else { 2 * r + q };
    Mat4::from_fn(|i, j| {
        let (qi, ri) = split(i);
        let (qj, rj) = split(j);
        if qi != qj {
            m.m[i][j] * exy
        } else {
            let same = m.m[i][j];
            let other = m.m[join(1 - qi, ri)][join(1 - qj, rj)];
            same * (half * (T::one() + ez)) + other * (half * (T::one() - ez))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{bell_state, pauli_expectations, BellKind};

    fn model(t1e: f64, t1n: f64) -> NoiseModel {
        NoiseModel { t1_electron: t1e, t1_nuclear: t1n, ..Default::default() }
    }

    #[test]
    fn population_difference_decays_by_e_after_t1() {
        let rho = DensityMatrix::<f64>::basis_state(0);
        let out = relaxation_channel(&rho, 130.0, &model(130.0, f64::INFINITY));
        let z = pauli_expectations(&out)[12];
        assert!((z - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn correlator_decay_factorizes() {
        let rho = bell_state::<f64>(BellKind::PsiPlus);
        let out = relaxation_channel(&rho, 50.0, &model(100.0, 400.0));
        let c = pauli_expectations(&out);
        let want = (-50.0f64 / 200.0).exp() * (-50.0f64 / 800.0).exp();
        assert!((c[5] - want).abs() < 1e-12);
        assert!((c[15] - (-0.5f64).exp() * (-0.125f64).exp()).abs() < 1e-12);
    }
}
