use crate::error::{Result, SpinLabError};
use crate::noise::ReadoutModel;
use crate::scalar::Real;

pub const BASIS_LABELS: [&str; 4] = ["up_e,up_n", "up_e,dn_n", "dn_e,up_n", "dn_e,dn_n"];

/// Hyperfine coupling tensor in MHz, `H_hf = sum_ij S_i A_ij I_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperfineTensor<T: Real = f64> {
    pub a: [[T; 3]; 3],
}

impl<T: Real> HyperfineTensor<T> {
    pub fn zero() -> Self {
        Self { a: [[T::zero(); 3]; 3] }
    }

    /// Axially symmetric tensor about z with an x-z off-diagonal term.
    pub fn axial(a_zz: T, a_perp: T, a_xz: T) -> Self {
        let z = T::zero();
        Self { a: [[a_perp, z, a_xz], [z, a_perp, z], [a_xz, z, a_zz]] }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().flatten().all(|x| x.is_finite())
    }
}

/// `(A_zz, A_perp, A_xz)` in MHz from [`super::fit_hyperfine`] at 73.5 mT.
///
/// The fitted `A_xz` is zero: the regularizer pins the one flat direction.
pub const DEFAULT_HYPERFINE_MHZ: (f64, f64, f64) = (-286.444_444_444, -151.610_947_272, 0.0);

/// Physical parameters of the two-spin system.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig<T: Real = f64> {
    /// Static field in tesla.
    pub b0: [T; 3],
    /// Electron gyromagnetic ratio, MHz/T.
    pub gamma_e: T,
    /// Nuclear gyromagnetic ratio, MHz/T.
    pub gamma_n: T,
    pub hyperfine: HyperfineTensor<T>,
    /// Seconds.
    pub t1_electron: T,
    /// Seconds.
    pub t1_nuclear: T,
    pub readout: ReadoutModel<T>,
}

impl<T: Real> SystemConfig<T> {
    /// 73.5 mT along z, free-electron and 13C gyromagnetic ratios, the fitted
    /// hyperfine tensor and phenomenological relaxation times.
    pub fn hbn_default() -> Self {
        let (azz, aperp, axz) = DEFAULT_HYPERFINE_MHZ;
        Self {
            b0: [T::zero(), T::zero(), T::lit(0.0735)],
            gamma_e: T::lit(28_024.95),
            gamma_n: T::lit(10.7084),
            hyperfine: HyperfineTensor::axial(T::lit(azz), T::lit(aperp), T::lit(axz)),
            // memory-free correlation decay, stand-in for T1 of the electron
            t1_electron: T::lit(130e-6),
            // memory-assisted correlation persistence, stand-in for T1 of the nucleus
            t1_nuclear: T::lit(1e-3),
            readout: ReadoutModel::default(),
        }
    }

    pub fn decoupled(b_z: T) -> Self {
        Self { b0: [T::zero(), T::zero(), b_z], hyperfine: HyperfineTensor::zero(), ..Self::hbn_default() }
    }

    pub fn field_magnitude(&self) -> T {
        self.b0.iter().fold(T::zero(), |acc, &b| acc + b * b).sqrt()
    }

    /// Every invariant violation as `(key, message)`.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |k: &str, m: &str| out.push((k.to_string(), m.to_string()));
        if !self.b0.iter().all(|b| b.is_finite()) {
            push("system.b0_tesla", "field components must be finite");
        } else if self.field_magnitude() <= T::zero() {
            push("system.b0_tesla", "field magnitude must be > 0");
        }
        if !(self.gamma_e.is_finite() && self.gamma_e > T::zero()) {
            push("system.gamma_e_mhz_per_t", "must be finite and > 0");
        }
        if !self.gamma_n.is_finite() {
            push("system.gamma_n_mhz_per_t", "must be finite");
        }
        if !self.hyperfine.is_finite() {
            push("system.hyperfine_mhz", "entries must be finite");
        }
        if !(self.t1_electron.is_finite() && self.t1_electron > T::zero()) {
            push("system.t1_electron_s", "must be finite and > 0");
        }
        if !(self.t1_nuclear.is_finite() && self.t1_nuclear > T::zero()) {
            push("system.t1_nuclear_s", "must be finite and > 0");
        }
        for (k, m) in self.readout.violations() {
            out.push((format!("system.readout.{k}"), m));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((key, message)) => Err(SpinLabError::Config { key, message }),
        }
    }
}

impl Default for SystemConfig<f64> {
    fn default() -> Self {
        Self::hbn_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        assert!(SystemConfig::<f64>::hbn_default().violations().is_empty());
        assert!(SystemConfig::<f32>::hbn_default().violations().is_empty());
    }

    #[test]
    fn negative_t1_is_reported_at_its_key() {
        let cfg = SystemConfig::<f64> { t1_electron: -1.0, ..Default::default() };
        let v = cfg.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].0, "system.t1_electron_s");
    }

    #[test]
    fn zero_field_is_rejected() {
        let cfg = SystemConfig::<f64> { b0: [0.0; 3], ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
