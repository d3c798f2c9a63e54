use super::config::{HyperfineTensor, SystemConfig};
use super::hamiltonian::build_hamiltonian;
use super::transitions::{transition_table, TransitionLabel};
use crate::error::{Result, SpinLabError};
use crate::fit::{levenberg_marquardt, numeric_jacobian, Bounds, LmOptions};

/// Measured line positions (MHz) and the tolerances used to weight them.
#[derive(Clone, Copy, Debug)]
pub struct SpectrumTargets {
    pub mw_splitting: f64,
    pub mw_tolerance: f64,
    pub rf_low: f64,
    pub rf_high: f64,
    pub rf_tolerance: f64,
    /// Scale of the weak `A_xz -> 0` regularizer that pins the otherwise flat
    /// direction of the fit.
    pub axz_scale: f64,
}

impl Default for SpectrumTargets {
    fn default() -> Self {
        Self { mw_splitting: 290.0, mw_tolerance: 2.0, rf_low: 141.0, rf_high: 145.0, rf_tolerance: 0.5, axz_scale: 100.0 }
    }
}

#[derive(Clone, Debug)]
pub struct HyperfineFit {
    /// `(A_zz, A_perp, A_xz)` in MHz.
    pub components: (f64, f64, f64),
    pub tensor: HyperfineTensor<f64>,
    pub mw_splitting: f64,
    pub rf: [f64; 2],
    /// Tolerance-weighted residuals `[mw, rf_low, rf_high, regularizer]`.
    pub weighted_residuals: [f64; 4],
}

/// Weighted least-squares fit of an axial tensor with an `x-z` term to the
/// measured lines, by exact diagonalization at every trial point.
///
/// For any tensor the MW splitting equals the sum of the two RF lines, so the
/// targets are generally incompatible and the fit balances them by tolerance.
pub fn fit_hyperfine(base: &SystemConfig<f64>, targets: &SpectrumTargets, start: (f64, f64, f64)) -> Result<HyperfineFit> {
    let lines = |p: &[f64]| -> Option<(f64, f64, f64)> {
        let cfg = SystemConfig { hyperfine: HyperfineTensor::axial(p[0], p[1], p[2]), ..base.clone() };
        let h = build_hamiltonian(&cfg).ok()?;
        let t = transition_table(&h, &cfg).ok()?;
        Some((t.mw_splitting(), t.get(TransitionLabel::Rf1).frequency, t.get(TransitionLabel::Rf2).frequency))
    };
    let residual = |p: &[f64]| -> Vec<f64> {
        match lines(p) {
            Some((mw, lo, hi)) => vec![
                (mw - targets.mw_splitting) / targets.mw_tolerance,
                (lo - targets.rf_low) / targets.rf_tolerance,
                (hi - targets.rf_high) / targets.rf_tolerance,
                p[2] / targets.axz_scale,
            ],
            None => vec![f64::NAN; 4],
        }
    };
    let x0 = [start.0, start.1, start.2];
    let opts = LmOptions { gradient_tol: 1e-9, ..Default::default() };
    let out = levenberg_marquardt(residual, |p: &[f64]| numeric_jacobian(&residual, p), &x0, &Bounds::free(3), &opts)?;
    let p = &out.params;
    let (mw, lo, hi) = lines(p).ok_or_else(|| SpinLabError::Fit("fitted tensor is degenerate".into()))?;
    let r = residual(p);
    Ok(HyperfineFit {
        components: (p[0], p[1], p[2]),
        tensor: HyperfineTensor::axial(p[0], p[1], p[2]),
        mw_splitting: mw,
        rf: [lo, hi],
        weighted_residuals: [r[0], r[1], r[2], r[3]],
    })
}
