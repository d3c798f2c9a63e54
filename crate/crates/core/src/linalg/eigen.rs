use num_complex::Complex;
use num_traits::Zero;

use super::cmat::CMat;
use crate::scalar::Real;

/// Eigen-decomposition of a Hermitian matrix: `A = V diag(values) V^dagger`,
/// eigenvalues ascending, eigenvectors in the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T: Real, const N: usize> {
    pub values: [T; N],
    pub vectors: CMat<T, N>,
}

impl<T: Real, const N: usize> HermitianEigen<T, N> {
    /// `V f(diag) V^dagger` for a real function of the eigenvalues.
    pub fn map(&self, f: impl Fn(T) -> Complex<T>) -> CMat<T, N> {
        let v = &self.vectors;
        let mut out = CMat::zeros();
        for k in 0..N {
            let fk = f(self.values[k]);
            for i in 0..N {
                let vik = v.m[i][k] * fk;
                for j in 0..N {
                    out.m[i][j] = out.m[i][j] + vik * v.m[j][k].conj();
                }
            }
        }
        out
    }

    pub fn min_value(&self) -> T {
        self.values[0]
    }
}

/// Cyclic complex Jacobi diagonalization of a Hermitian matrix.
///
/// Only the Hermitian part of `a` is used.
pub fn eigh<T: Real, const N: usize>(a: &CMat<T, N>) -> HermitianEigen<T, N> {
    let mut m = a.hermitian_part();
    let mut v = CMat::<T, N>::identity();
    let scale = m.norm().max(T::min_positive_value());
    let tol = T::epsilon() * scale;

    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..N {
            for q in (p + 1)..N {
                off = off + m.m[p][q].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = m.m[p][q];
                let mag = apq.norm();
                if mag <= tol * T::lit(1e-3) {
                    continue;
                }
                let phase = Complex::new(apq.re / mag, -apq.im / mag);
                let app = m.m[p][p].re;
                let aqq = m.m[q][q].re;
                let tau = (aqq - app) / (T::lit(2.0) * mag);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // G = diag-phase * real rotation acting on (p, q)
                let mut g = CMat::<T, N>::identity();
                g.m[p][p] = Complex::new(c, T::zero());
                g.m[p][q] = Complex::new(s, T::zero());
                g.m[q][p] = phase * (-s);
                g.m[q][q] = phase * c;
                m = g.adjoint() * m * g;
                m.m[p][q] = Complex::zero();
                m.m[q][p] = Complex::zero();
                v = v * g;
            }
        }
    }

    let mut order: [usize; N] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| m.m[i][i].re.partial_cmp(&m.m[j][j].re).unwrap_or(std::cmp::Ordering::Equal));
    let values = std::array::from_fn(|k| m.m[order[k]][order[k]].re);
    let vectors = CMat::from_fn(|i, k| v.m[i][order[k]]);
    HermitianEigen { values, vectors }
}

/// Principal square root of a positive semidefinite matrix; negative
/// eigenvalues from round-off are clamped to zero.
pub fn sqrtm_psd<T: Real, const N: usize>(a: &CMat<T, N>) -> CMat<T, N> {
    eigh(a).map(|x| Complex::new(x.max(T::zero()).sqrt(), T::zero()))
}
