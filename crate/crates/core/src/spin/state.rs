use std::fmt;

use num_complex::Complex;

use super::operators::pauli2;
use crate::error::{Result, SpinLabError};
use crate::linalg::{eigh, sqrtm_psd, Mat2, Mat4};
use crate::scalar::{Real, C};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Qubit {
    Electron,
    Nuclear,
}

/// Two-qubit density matrix, Hermitian with unit trace and non-negative spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix<T: Real = f64> {
    rho: Mat4<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Physicality tolerance for `T`: 1e-10 in double precision.
    pub fn tolerance() -> T {
        T::lit(1e-10).max(T::tolerance() * T::lit(4.0))
    }

    pub fn new(rho: Mat4<T>) -> Result<Self> {
        let out = Self { rho };
        out.check()?;
        Ok(out)
    }

    /// Skips validation. For internal use where physicality holds by
    /// construction (unitary or CPTP evolution of a physical state).
    pub fn from_matrix_unchecked(rho: Mat4<T>) -> Self {
        Self { rho }
    }

    pub fn check(&self) -> Result<()> {
        let tol = Self::tolerance();
        if self.rho.hermiticity_error() > tol {
            return Err(SpinLabError::Domain("density matrix is not Hermitian".into()));
        }
        let tr = self.rho.trace();
        if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
            return Err(SpinLabError::Domain(format!("density matrix trace {tr} != 1")));
        }
        let lmin = eigh(&self.rho).min_value();
        if lmin < -tol {
            return Err(SpinLabError::Domain(format!("density matrix eigenvalue {lmin} < 0")));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &Mat4<T> {
        &self.rho
    }

    pub fn pure(psi: [C<T>; 4]) -> Self {
        let n = psi.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        let v = psi.map(|z| z / n);
        Self { rho: Mat4::outer(&v, &v) }
    }

    /// Computational basis state `k` (see the basis ordering of the crate).
    pub fn basis_state(k: usize) -> Self {
        let mut d = [T::zero(); 4];
        d[k] = T::one();
        Self { rho: Mat4::from_real_diag(d) }
    }

    pub fn maximally_mixed() -> Self {
        Self { rho: Mat4::from_real_diag([T::lit(0.25); 4]) }
    }

    pub fn product(electron: &Mat2<T>, nucleus: &Mat2<T>) -> Self {
        Self { rho: crate::linalg::kron2(electron, nucleus) }
    }

    pub fn populations(&self) -> [T; 4] {
        [self.rho.m[0][0].re, self.rho.m[1][1].re, self.rho.m[2][2].re, self.rho.m[3][3].re]
    }

    pub fn eigenvalues(&self) -> [T; 4] {
        eigh(&self.rho).values
    }

    pub fn purity(&self) -> T {
        self.rho.inner(&self.rho).re
    }

    /// `U rho U^dagger`.
    pub fn evolve(&self, u: &Mat4<T>) -> Self {
        Self { rho: self.rho.conjugate_by(u) }
    }

    /// Electron-up population.
    pub fn electron_up(&self) -> T {
        self.rho.m[0][0].re + self.rho.m[1][1].re
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &Self) -> T {
        let e = eigh(&(self.rho - other.rho)).values;
        e.iter().fold(T::zero(), |a, x| a + x.abs()) * T::lit(0.5)
    }

    pub fn cast<U: Real>(&self) -> DensityMatrix<U> {
        DensityMatrix { rho: self.rho.cast() }
    }
}

impl<T: Real> fmt::Display for DensityMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rho.m {
            let cells: Vec<String> = row.iter().map(|z| format!("{:+.4}{:+.4}i", z.re, z.im)).collect();
            writeln!(f, "{}", cells.join("  "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BellKind {
    /// `(|up up> + |dn dn>)/sqrt 2`
    PsiPlus,
    /// `(|up up> - |dn dn>)/sqrt 2`
    PsiMinus,
    /// `(|up dn> + |dn up>)/sqrt 2`
    PhiPlus,
    /// `(|up dn> - |dn up>)/sqrt 2`
    PhiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [Self::PsiPlus, Self::PsiMinus, Self::PhiPlus, Self::PhiMinus];

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psi+" | "psiplus" | "psi_plus" => Some(Self::PsiPlus),
            "psi-" | "psiminus" | "psi_minus" => Some(Self::PsiMinus),
            "phi+" | "phiplus" | "phi_plus" => Some(Self::PhiPlus),
            "phi-" | "phiminus" | "phi_minus" => Some(Self::PhiMinus),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PsiPlus => "psi+",
            Self::PsiMinus => "psi-",
            Self::PhiPlus => "phi+",
            Self::PhiMinus => "phi-",
        }
    }
}

pub fn bell_state<T: Real>(kind: BellKind) -> DensityMatrix<T> {
    let z = Complex::new(T::zero(), T::zero());
    let h = Complex::new(T::FRAC_1_SQRT_2(), T::zero());
    let psi = match kind {
        BellKind::PsiPlus => [h, z, z, h],
        BellKind::PsiMinus => [h, z, z, -h],
        BellKind::PhiPlus => [z, h, h, z],
        BellKind::PhiMinus => [z, h, -h, z],
    };
    DensityMatrix::pure(psi)
}

/// Uhlmann fidelity `Tr sqrt(sqrt(target) rho sqrt(target))`, which reduces to
/// `sqrt(<psi|rho|psi>)` for a pure target.
pub fn fidelity<T: Real>(rho: &DensityMatrix<T>, target: &DensityMatrix<T>) -> Result<T> {
    rho.check()?;
    target.check()?;
    let s = sqrtm_psd(&target.rho);
    let m = s * rho.rho * s;
    let e = eigh(&m).values;
    let f = e.iter().fold(T::zero(), |a, &x| a + x.max(T::zero()).sqrt());
    Ok(f.min(T::one()).max(T::zero()))
}

pub fn partial_trace<T: Real>(rho: &DensityMatrix<T>, keep: Qubit) -> Mat2<T> {
    let m = &rho.rho.m;
    let mut out = Mat2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            out.m[a][b] = match keep {
                Qubit::Electron => m[2 * a][2 * b] + m[2 * a + 1][2 * b + 1],
                Qubit::Nuclear => m[a][b] + m[2 + a][2 + b],
            };
        }
    }
    out
}

/// `<sigma_i (x) sigma_j>` at index `4 i + j`, with 0..4 = I, X, Y, Z.
pub fn pauli_expectations<T: Real>(rho: &DensityMatrix<T>) -> [T; 16] {
    let mut out = [T::zero(); 16];
    for i in 0..4 {
        for j in 0..4 {
            out[4 * i + j] = pauli2::<T>(i, j).inner(&rho.rho).re;
        }
    }
    out
}

/// `1/4 sum_ij c_ij sigma_i (x) sigma_j`.
pub fn from_pauli<T: Real>(c: &[T; 16]) -> Mat4<T> {
    let mut out = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            if c[4 * i + j] != T::zero() {
                out += pauli2::<T>(i, j).scale_re(c[4 * i + j] * T::lit(0.25));
            }
        }
    }
    out
}
