use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::{Real, C};

/// Dense `N x N` complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat<T: Real, const N: usize> {
    pub m: [[C<T>; N]; N],
}

pub type Mat2<T> = CMat<T, 2>;
pub type Mat4<T> = CMat<T, 4>;

impl<T: Real, const N: usize> CMat<T, N> {
    pub fn zeros() -> Self {
        Self { m: [[C::zero(); N]; N] }
    }

    pub fn identity() -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            out.m[i][i] = C::one();
        }
        out
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                out.m[i][j] = f(i, j);
            }
        }
        out
    }

    pub fn from_real_diag(d: [T; N]) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            out.m[i][i] = Complex::new(d[i], T::zero());
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(|i, j| self.m[j][i].conj())
    }

    pub fn trace(&self) -> C<T> {
        (0..N).fold(C::zero(), |acc, i| acc + self.m[i][i])
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self::from_fn(|i, j| self.m[i][j] * s)
    }

    pub fn scale_re(&self, s: T) -> Self {
        Self::from_fn(|i, j| self.m[i][j] * s)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        let mut acc = T::zero();
        for row in &self.m {
            for z in row {
                acc = acc + z.norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> T {
        let mut best = T::zero();
        for j in 0..N {
            let mut s = T::zero();
            for i in 0..N {
                s = s + self.m[i][j].norm();
            }
            best = best.max(s);
        }
        best
    }

    pub fn max_abs(&self) -> T {
        let mut best = T::zero();
        for row in &self.m {
            for z in row {
                best = best.max(z.norm());
            }
        }
        best
    }

    /// Largest deviation from Hermiticity, `max |a_ij - conj(a_ji)|`.
    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for i in 0..N {
            for j in i..N {
                worst = worst.max((self.m[i][j] - self.m[j][i].conj()).norm());
            }
        }
        worst
    }

    /// `(A + A^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(|i, j| (self.m[i][j] + self.m[j][i].conj()) * half)
    }

    /// `U A U^dagger`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        *u * *self * u.adjoint()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    pub fn mul_vec(&self, v: &[C<T>; N]) -> [C<T>; N] {
        let mut out = [C::zero(); N];
        for i in 0..N {
            for j in 0..N {
                out[i] = out[i] + self.m[i][j] * v[j];
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> [C<T>; N] {
        let mut out = [C::zero(); N];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.m[i][j];
        }
        out
    }

    /// `Tr(A^dagger B)`.
    pub fn inner(&self, other: &Self) -> C<T> {
        let mut acc = C::zero();
        for i in 0..N {
            for j in 0..N {
                acc = acc + self.m[i][j].conj() * other.m[i][j];
            }
        }
        acc
    }

    pub fn outer(u: &[C<T>; N], v: &[C<T>; N]) -> Self {
        Self::from_fn(|i, j| u[i] * v[j].conj())
    }

    pub fn cast<U: Real>(&self) -> CMat<U, N> {
        CMat::from_fn(|i, j| {
            let z = self.m[i][j];
            Complex::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy()))
        })
    }
}

/// Kronecker product of two 2x2 matrices, electron factor first.
pub fn kron2<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat4<T> {
    Mat4::from_fn(|i, j| a.m[i / 2][j / 2] * b.m[i % 2][j % 2])
}

impl<T: Real, const N: usize> Index<(usize, usize)> for CMat<T, N> {
    type Output = C<T>;
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.m[i][j]
    }
}

impl<T: Real, const N: usize> IndexMut<(usize, usize)> for CMat<T, N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.m[i][j]
    }
}

impl<T: Real, const N: usize> Add for CMat<T, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.m[i][j] + rhs.m[i][j])
    }
}

impl<T: Real, const N: usize> AddAssign for CMat<T, N> {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..N {
            for j in 0..N {
                self.m[i][j] = self.m[i][j] + rhs.m[i][j];
            }
        }
    }
}

impl<T: Real, const N: usize> Sub for CMat<T, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.m[i][j] - rhs.m[i][j])
    }
}

impl<T: Real, const N: usize> Neg for CMat<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_fn(|i, j| -self.m[i][j])
    }
}

impl<T: Real, const N: usize> Mul for CMat<T, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.m[i][k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..N {
                    out.m[i][j] = out.m[i][j] + a * rhs.m[k][j];
                }
            }
        }
        out
    }
}

impl<T: Real, const N: usize> Mul<C<T>> for CMat<T, N> {
    type Output = Self;
    fn mul(self, rhs: C<T>) -> Self {
        self.scale(rhs)
    }
}
