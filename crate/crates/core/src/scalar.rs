//! Scalar abstraction for the state and operator math.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon scaled for accumulated 4x4 round-off.
    fn tolerance() -> Self {
        Self::epsilon() * Self::lit(64.0)
    }
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

pub type C<T> = Complex<T>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub fn re<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}
