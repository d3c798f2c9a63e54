use num_complex::Complex;

use super::config::SystemConfig;
use super::operators::{i as nuc, s as elec};
use crate::error::{Result, SpinLabError};
use crate::linalg::{eigh, Mat4};
use crate::scalar::Real;

/// Two-spin Hamiltonian in MHz on the fixed computational basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian<T: Real = f64> {
    pub h: Mat4<T>,
}

impl<T: Real> Hamiltonian<T> {
    /// Wraps a matrix, rejecting anything not Hermitian to 1e-12 relative.
    pub fn new(h: Mat4<T>) -> Result<Self> {
        if !h.m.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(SpinLabError::config("system", "Hamiltonian has non-finite entries"));
        }
        let scale = h.max_abs().max(T::one());
        let tol = T::lit(1e-12).max(T::tolerance()) * scale;
        if h.hermiticity_error() > tol {
            return Err(SpinLabError::Domain("Hamiltonian is not Hermitian".into()));
        }
        Ok(Self { h })
    }

    pub fn shifted(&self, c: T) -> Self {
        Self { h: self.h + Mat4::from_real_diag([c; 4]) }
    }

    /// Largest transition frequency in MHz.
    pub fn max_frequency(&self) -> T {
        let e = eigh(&self.h).values;
        e[3] - e[0]
    }
}

/// `H = gamma_e B.S + gamma_n B.I + S.A.I`.
pub fn build_hamiltonian<T: Real>(config: &SystemConfig<T>) -> Result<Hamiltonian<T>> {
    if !config.b0.iter().all(|b| b.is_finite())
        || !config.gamma_e.is_finite()
        || !config.gamma_n.is_finite()
    {
        return Err(SpinLabError::config("system", "field and gyromagnetic ratios must be finite"));
    }
    if !config.hyperfine.is_finite() {
        return Err(SpinLabError::config("system.hyperfine_mhz", "entries must be finite"));
    }
    let s = [elec::<T>(0), elec(1), elec(2)];
    let i = [nuc::<T>(0), nuc(1), nuc(2)];
    let mut h = Mat4::zeros();
    for k in 0..3 {
        h += s[k].scale_re(config.gamma_e * config.b0[k]);
        h += i[k].scale_re(config.gamma_n * config.b0[k]);
        for l in 0..3 {
            let a = config.hyperfine.a[k][l];
            if a != T::zero() {
                h += (s[k] * i[l]).scale_re(a);
            }
        }
    }
    Hamiltonian::new(h)
}

/// Drive channel of a tone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Mw,
    Rf,
}

/// Transverse coupling of a linearly polarized drive, normalized so that the
/// tone's bare Rabi frequency multiplies the addressed spin's `x` operator.
///
/// The same field also couples to the other spin with the gyromagnetic ratio
/// ratio, which is what lends nuclear transitions their electron character.
pub fn drive_operator<T: Real>(channel: Channel, config: &SystemConfig<T>) -> Mat4<T> {
    let ratio = config.gamma_n / config.gamma_e;
    match channel {
        Channel::Mw => elec::<T>(0) + nuc::<T>(0).scale_re(ratio),
        Channel::Rf => nuc::<T>(0) + elec::<T>(0).scale_re(T::one() / ratio),
    }
}

/// Eigenbasis of a Hamiltonian with each eigenvector assigned to the
/// computational state it overlaps most.
///
/// Column `k` of `vectors` is the dressed version of computational state `k`,
/// phased so that its `k`-th component is real and positive.
#[derive(Clone, Debug)]
pub struct DressedBasis<T: Real = f64> {
    pub energies: [T; 4],
    pub vectors: Mat4<T>,
}

impl<T: Real> DressedBasis<T> {
    pub fn new(h: &Hamiltonian<T>) -> Result<Self> {
        let eig = eigh(&h.h);
        for k in 0..3 {
            let gap = eig.values[k + 1] - eig.values[k];
            if gap < T::lit(1e-6) {
                return Err(SpinLabError::Degenerate { gap: gap.to_f64_lossy() });
            }
        }
        // Greedy assignment on |<comp|eig>|^2, largest first.
        let mut pairs: Vec<(T, usize, usize)> = Vec::with_capacity(16);
        for c in 0..4 {
            for e in 0..4 {
                pairs.push((eig.vectors.m[c][e].norm_sqr(), c, e));
            }
        }
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut comp_of_eig = [usize::MAX; 4];
        let mut used_comp = [false; 4];
        for (_, c, e) in pairs {
            if comp_of_eig[e] == usize::MAX && !used_comp[c] {
                comp_of_eig[e] = c;
                used_comp[c] = true;
            }
        }
        let mut energies = [T::zero(); 4];
        let mut vectors = Mat4::zeros();
        for e in 0..4 {
            let c = comp_of_eig[e];
            energies[c] = eig.values[e];
            let pivot = eig.vectors.m[c][e];
            let phase = if pivot.norm() > T::zero() { pivot.conj() / pivot.norm() } else { Complex::new(T::one(), T::zero()) };
            for r in 0..4 {
                vectors.m[r][c] = eig.vectors.m[r][e] * phase;
            }
        }
        Ok(Self { energies, vectors })
    }

    /// Operator expressed in the dressed basis, `V^dagger A V`.
    pub fn to_dressed(&self, a: &Mat4<T>) -> Mat4<T> {
        self.vectors.adjoint() * *a * self.vectors
    }

    /// Inverse of [`Self::to_dressed`].
    pub fn to_lab(&self, a: &Mat4<T>) -> Mat4<T> {
        self.vectors * *a * self.vectors.adjoint()
    }

    /// Smallest overlap `|<k|v_k>|^2` across the four labels.
    pub fn min_purity(&self) -> T {
        (0..4).map(|k| self.vectors.m[k][k].norm_sqr()).fold(T::one(), |a, b| a.min(b))
    }
}
