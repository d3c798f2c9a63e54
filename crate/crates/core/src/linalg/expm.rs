use num_complex::Complex;

use super::cmat::CMat;
use crate::scalar::Real;

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled until its 1-norm is below 1/2, the series is summed
/// until the next term drops below machine precision, then squared back.
pub fn expm<T: Real, const N: usize>(a: &CMat<T, N>) -> CMat<T, N> {
    let norm = a.norm1();
    let half = T::lit(0.5);
    let mut squarings = 0u32;
    let mut scaled = *a;
    if norm > half {
        let s = (norm / half).log2().ceil();
        squarings = s.to_u32().unwrap_or(0);
        scaled = a.scale_re(T::one() / T::lit(2f64.powi(squarings as i32)));
    }

    let mut result = CMat::<T, N>::identity();
    let mut term = CMat::<T, N>::identity();
    let eps = T::epsilon();
    for k in 1..=30u32 {
        term = (term * scaled).scale_re(T::one() / T::lit(k as f64));
        result += term;
        if term.norm1() <= eps * result.norm1() {
            break;
        }
    }
    for _ in 0..squarings {
        result = result * result;
    }
    result
}

/// Propagator `exp(-i 2 pi H dt)` for a Hermitian `H` in MHz and `dt` in us.
pub fn unitary_step<T: Real, const N: usize>(h: &CMat<T, N>, dt: T) -> CMat<T, N> {
    let factor = Complex::new(T::zero(), -T::TAU() * dt);
    expm(&h.scale(factor))
}
