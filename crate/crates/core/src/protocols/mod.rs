//! Experiment runners assembled from the pulse engine, the noise models and
//! the photon-count readout: ODMR, Rabi, CPMG and AC sensing, Bell-state
//! preparation, and correlation spectroscopy with a nuclear memory.
//!
//! Every runner takes a [`Lab`] and a seed. Per-point and per-trajectory
//! random streams are derived from that seed, and ensemble sums run in a
//! fixed order, so results do not depend on the rayon worker count.

mod bell;
mod correlation;
mod cpmg;
mod manifest;
mod odmr;
mod rabi;

pub use bell::{bell_sequence, run_bell_protocol, BellResult, BellSpec};
pub use correlation::{
    correlation_axis, correlation_closed_form, run_correlation, unfold_alias, CorrelationResult, CorrelationSpec,
};
pub use cpmg::{
    ac_scan_exact, extract_t2_scaling, find_dip, EXACT_PHASE_SAMPLES, run_ac_field_scan, run_cpmg, AcFieldSpec, AcPhase, CpmgAxis,
    CpmgEngine, CpmgSpec, T2Scaling,
};
pub use manifest::RunManifest;
pub use odmr::{run_odmr, OdmrSpec};
pub use rabi::{fit_rabi, run_rabi, RabiSpec, RabiTarget};

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Result, SpinLabError};
use crate::linalg::Mat4;
use crate::noise::{sample_counts, NoiseModel, ReadoutModel, ReadoutSample};
use crate::pulse::{
    apply_sequence_with_noise_opts, calibrate_dual_tone, compile_program, trajectory_rng, CompileOptions,
    DriveAmplitudes, DualToneCalibration, GateSpec, PulseSequence, SpinSystem, TrajectoryOptions,
};
use crate::spin::{DensityMatrix, SystemConfig, TransitionLabel};

/// Everything a protocol needs besides its own sweep parameters.
#[derive(Clone, Debug)]
pub struct Lab {
    pub system: SpinSystem,
    pub noise: NoiseModel,
    pub readout: ReadoutModel<f64>,
    /// Bare amplitudes for gate compilation.
    pub drive: DriveAmplitudes,
    pub calibration: DualToneCalibration,
    pub compile: CompileOptions,
    /// Monte-Carlo noise realizations per ensemble average.
    pub trajectories: usize,
}

impl Lab {
    /// `mw_rabi` and `rf_rabi` are the effective Rabi frequencies on MW1 and RF1.
    pub fn new(
        config: &SystemConfig<f64>,
        noise: NoiseModel,
        mw_rabi: f64,
        rf_rabi: f64,
        trajectories: usize,
    ) -> Result<Self> {
        noise.validate()?;
        let system = SpinSystem::new(config)?;
        let drive = DriveAmplitudes::effective(&system.table, mw_rabi, rf_rabi);
        let calibration = calibrate_dual_tone(&system, &drive)?;
        if trajectories == 0 {
            return Err(SpinLabError::config("trajectories", "must be at least 1"));
        }
        Ok(Self {
            system,
            noise,
            readout: config.readout,
            drive,
            calibration,
            compile: CompileOptions { synchronize: true },
            trajectories,
        })
    }

    /// Default hBN system and noise, 5 MHz electron and 0.8 MHz nuclear Rabi
    /// frequencies, 400 trajectories.
    pub fn hbn_default() -> Result<Self> {
        let config = SystemConfig::hbn_default();
        Self::new(&config, NoiseModel::for_system(&config), 5.0, 0.8, 400)
    }

    /// The same lab with dephasing and relaxation switched off.
    pub fn noiseless(&self) -> Self {
        Self { noise: NoiseModel::noiseless(), ..self.clone() }
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Self {
        Self { noise, ..self.clone() }
    }

    pub fn compile(&self, gates: &[GateSpec]) -> Result<PulseSequence> {
        compile_program(gates, &self.system.table, &self.calibration, &self.drive, &self.compile)
    }

    /// Bare MW amplitude giving effective Rabi frequency `rabi` on MW1.
    pub fn mw_amplitude(&self, rabi: f64) -> f64 {
        rabi / self.system.table.get(TransitionLabel::Mw1).enhancement()
    }

    /// Trajectories actually needed: one when the noise is deterministic.
    pub fn effective_trajectories(&self) -> usize {
        if self.noise.is_dephasing_free() {
            1
        } else {
            self.trajectories
        }
    }

    /// Ensemble-averaged final state.
    pub fn ensemble(
        &self,
        seq: &PulseSequence,
        rho0: &DensityMatrix<f64>,
        seed: u64,
        opts: &TrajectoryOptions<'_>,
    ) -> Result<DensityMatrix<f64>> {
        apply_sequence_with_noise_opts(seq, &self.system, rho0, &self.noise, self.effective_trajectories(), seed, opts)
    }

    /// Photon totals for population `p`, from the stream `(seed, index)`.
    pub fn read(&self, p: f64, shots: u64, seed: u64, index: u64) -> ReadoutSample {
        let mut rng = trajectory_rng(derive_seed(seed, "readout", 0), index);
        sample_counts(p, &self.readout, shots, &mut rng)
    }
}

/// Deterministic sub-seed for a named stage and index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in tag.bytes().chain(index.to_le_bytes()) {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// `[start, stop]` in `points` equal steps.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![start],
        n => (0..n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Electron down, nucleus maximally mixed: the state after optical pumping
/// without nuclear polarization.
pub fn electron_down_mixed() -> DensityMatrix<f64> {
    DensityMatrix::from_matrix_unchecked(Mat4::from_real_diag([0.0, 0.0, 0.5, 0.5]))
}

/// Multiplies the electron coherences by `factor`.
pub(crate) fn dephase_electron(rho: &DensityMatrix<f64>, factor: f64) -> DensityMatrix<f64> {
    let m = rho.matrix();
    DensityMatrix::from_matrix_unchecked(Mat4::from_fn(|i, j| {
        if i / 2 != j / 2 {
            m.m[i][j] * Complex::new(factor, 0.0)
        } else {
            m.m[i][j]
        }
    }))
}

/// Maps `f` over `0..n` in parallel, keeping the output order.
pub(crate) fn par_points<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(&f).collect()
}

pub(crate) fn check_shots(shots: u64) -> Result<()> {
    if shots == 0 {
        return Err(SpinLabError::Domain("shots must be at least 1".into()));
    }
    Ok(())
}
