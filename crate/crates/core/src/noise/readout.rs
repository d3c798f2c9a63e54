use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::scalar::Real;
use crate::spin::DensityMatrix;

/// Spin-dependent photoluminescence readout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutModel<T: Real = f64> {
    /// Mean detected photons per shot for electron down.
    pub counts_bright: T,
    /// Fractional count reduction for electron up.
    pub contrast: T,
}

impl<T: Real> Default for ReadoutModel<T> {
    fn default() -> Self {
        Self { counts_bright: T::lit(10.0), contrast: T::lit(0.3) }
    }
}

impl<T: Real> ReadoutModel<T> {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(self.counts_bright.is_finite() && self.counts_bright > T::zero()) {
            out.push(("counts_bright".into(), "must be finite and > 0".into()));
        }
        if !(self.contrast > T::zero() && self.contrast < T::one()) {
            out.push(("contrast".into(), "must lie strictly between 0 and 1".into()));
        }
        out
    }

    /// Mean counts per shot at electron-up population `p`.
    pub fn mean_counts(&self, p: T) -> T {
        self.counts_bright * (T::one() - self.contrast * p)
    }

    /// Population from signal and reference totals.
    pub fn estimate(&self, signal: f64, reference: f64) -> f64 {
        if reference <= 0.0 {
            return 0.0;
        }
        (1.0 - signal / reference) / self.contrast.to_f64_lossy()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutSample {
    pub counts_signal: u64,
    pub counts_reference: u64,
    pub population_estimate: f64,
}

/// Poisson photon totals over `shots` for an electron-up population `p`, plus
/// a paired reference acquisition at `p = 0`.
pub fn sample_counts(p: f64, readout: &ReadoutModel<f64>, shots: u64, rng: &mut impl rand::Rng) -> ReadoutSample {
    let p = p.clamp(0.0, 1.0);
    let n = shots as f64;
    let draw = |mean: f64, rng: &mut dyn rand::RngCore| -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
    };
    let counts_signal = draw(n * readout.mean_counts(p), rng);
    let counts_reference = draw(n * readout.counts_bright, rng);
    ReadoutSample {
        counts_signal,
        counts_reference,
        population_estimate: readout.estimate(counts_signal as f64, counts_reference as f64),
    }
}

/// Reads the electron-up population of `rho` with shot noise.
pub fn simulate_readout(rho: &DensityMatrix<f64>, readout: &ReadoutModel<f64>, shots: u64, seed: u64) -> ReadoutSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_counts(rho.electron_up(), readout, shots.max(1), &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_counts_limits() {
        let r = ReadoutModel::<f64>::default();
        assert_eq!(r.mean_counts(0.0), 10.0);
        assert!((r.mean_counts(1.0) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn contrast_outside_unit_interval_is_reported() {
        let r = ReadoutModel::<f64> { contrast: 1.0, ..Default::default() };
        assert_eq!(r.violations().len(), 1);
    }
}
