use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rayon::prelude::*;

use super::cpmg::AcFieldSpec;
use super::{check_shots, dephase_electron, derive_seed, par_points, Lab};
use crate::error::{Result, SpinLabError};
use crate::fit::{fit_damped_cosine, spectrum_and_linewidth, FitResult, SpectrumResult};
use crate::noise::{cpmg_sensitivity, ExperimentRecord};
use crate::pulse::{
    compile_gate, run_trajectory, trajectory_rng, AcDetuning, AxisPhase, CompileOptions, DriveAmplitudes, GateKind,
    GateSpec, LaserMode, PulseSegment, PulseSequence, TrajectoryOptions,
};
use crate::spin::{DensityMatrix, TransitionLabel};

/// Length of each optical reset inside the memory step, us.
const LASER_US: f64 = 1.0;

/// Two CPMG sensing blocks separated by a storage period. The field phase
/// is drawn uniformly for every simulated shot.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSpec {
    pub field: AcFieldSpec,
    pub n_pulses: usize,
    /// Half inter-pulse spacing of both blocks, us.
    pub tau: f64,
    /// Effective MW Rabi frequency of the sensing and SWAP pulses.
    pub rabi_mhz: f64,
    /// Store the first result on the nucleus during the delay.
    pub memory: bool,
    /// Start-to-start separation of the two sensing blocks, us.
    pub t_axis: Vec<f64>,
    pub shots: u64,
    /// Field phases (and noise realizations) averaged per point.
    pub phase_samples: usize,
    /// Frequency used to unfold the aliased oscillation; usually `f_ac`.
    pub sampling_reference: f64,
}

/// Separation axis with step `m / f_ref + offset_fraction / f_ref`: the
/// oscillation at `f_ref` advances by `offset_fraction` of a cycle per step.
pub fn correlation_axis(f_ref: f64, start: f64, t_max: f64, points: usize, offset_fraction: f64) -> Result<Vec<f64>> {
    if !(f_ref > 0.0 && t_max > start && start >= 0.0 && points >= 4) {
        return Err(SpinLabError::config("t_axis", "need f_ref > 0, 0 <= start < t_max and at least 4 points"));
    }
    if !(0.0..0.5).contains(&offset_fraction) {
        return Err(SpinLabError::config("t_axis.offset_fraction", "must lie in [0, 0.5)"));
    }
    let whole = (((t_max - start) / (points - 1) as f64) * f_ref - offset_fraction).floor().max(0.0);
    let step = (whole + offset_fraction) / f_ref;
    if step <= 0.0 {
        return Err(SpinLabError::config("t_axis", "step collapses to zero; use fewer points or an offset"));
    }
    let t0 = (start * f_ref).ceil() / f_ref;
    Ok((0..points).map(|k| t0 + k as f64 * step).collect())
}

/// Leading-order correlation signal `(1 - p0 e^{-T/T_env} cos(2 pi f T)) / 2`
/// with `p0 = 2 J1(phi0)^2`, which is `phi0^2 / 2` for small phases. Higher
/// odd harmonics carry `2 J_k(phi0)^2`, below 1e-3 for `phi0 <= 1`.
pub fn correlation_closed_form(phi0: f64, f: f64, t: f64, envelope_tau: f64) -> f64 {
    let p0 = 2.0 * libm::j1(phi0).powi(2);
    0.5 * (1.0 - p0 * (-t / envelope_tau).exp() * (TAU * f * t).cos())
}

/// True frequency near `f_ref` whose samples every `step` alias to `alias`.
pub fn unfold_alias(alias: f64, step: f64, f_ref: f64) -> f64 {
    let nu = alias * step;
    let m0 = (f_ref * step).floor();
    let mut best = f64::NAN;
    for m in [m0 - 1.0, m0, m0 + 1.0] {
        for c in [m + nu, m - nu] {
            let f = c / step;
            if best.is_nan() || (f - f_ref).abs() < (best - f_ref).abs() {
                best = f;
            }
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct CorrelationResult {
    pub t_axis: Vec<f64>,
    /// Measured electron-up population per separation, clipped to `[0, 1]`.
    pub p_values: Vec<f64>,
    /// Phase-averaged population before shot noise.
    pub expected: Vec<f64>,
    /// Peak sensing phase of one block.
    pub phi0: f64,
    /// Damped-cosine fit of `p_values`; `None` if it failed.
    pub envelope_fit: Option<FitResult>,
    /// Decay constant of the envelope, us (NaN without a fit).
    pub envelope_tau: f64,
    pub spectrum: SpectrumResult,
    pub linewidth_khz: f64,
    /// Unfolded oscillation frequency, MHz.
    pub frequency_estimate: f64,
    pub record: ExperimentRecord,
}

struct Blocks {
    first: PulseSequence,
    second: PulseSequence,
    store: PulseSequence,
    retrieve: PulseSequence,
}

impl CorrelationSpec {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        check_shots(self.shots)?;
        if self.n_pulses == 0 || !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(SpinLabError::config("n_pulses", "need N >= 1 and a finite tau >= 0"));
        }
        if !(self.rabi_mhz > 0.0 && self.rabi_mhz.is_finite()) {
            return Err(SpinLabError::config("rabi_mhz", "must be finite and > 0"));
        }
        if self.phase_samples == 0 {
            return Err(SpinLabError::config("phase_samples", "must be at least 1"));
        }
        if !(self.sampling_reference > 0.0) {
            return Err(SpinLabError::config("sampling_reference", "must be > 0"));
        }
        if self.t_axis.len() < 4 {
            return Err(SpinLabError::config("t_axis", "needs at least 4 points"));
        }
        Ok(())
    }

    /// Peak phase `2 pi A |Y(2 pi f_ac)|` of one block from its finite-pulse
    /// sensitivity function.
    pub fn phi0(&self, lab: &Lab) -> f64 {
        let (t2, t1) = (0.25 / self.rabi_mhz, 0.5 / self.rabi_mhz);
        let (pulses, total) = cpmg_sensitivity(self.n_pulses, self.tau, t2, t1);
        let a = self.field.detuning_amplitude(lab.system.config.gamma_e);
        TAU * a * pulses.response(TAU * self.field.f_ac, total).norm()
    }

    fn blocks(&self, lab: &Lab) -> Result<Blocks> {
        let drive = DriveAmplitudes { mw: lab.mw_amplitude(self.rabi_mhz), rf: lab.drive.rf };
        let gate = |kind, axis, sync| {
            compile_gate(
                &GateSpec::new(kind, axis),
                &lab.system.table,
                &lab.calibration,
                &drive,
                &CompileOptions { synchronize: sync },
            )
        };
        let half = GateKind::SelE(TransitionLabel::Mw1, FRAC_PI_2);
        let pi = gate(GateKind::SelE(TransitionLabel::Mw1, PI), AxisPhase::PlusX, false)?;
        let mut body = gate(half, AxisPhase::PlusY, false)?;
        for _ in 0..self.n_pulses {
            body.push(PulseSegment::idle(self.tau));
            body.extend(&pi);
            body.push(PulseSegment::idle(self.tau));
        }
        // a pi/2 about x turns the accrued phase into a population ~ sin(phi);
        // the retrieval inverts the stored bit, so the memory run reads with
        // the opposite axis to keep the same overall sign
        let (read1, read2) = if self.memory {
            (AxisPhase::PlusX, AxisPhase::MinusX)
        } else {
            (AxisPhase::PlusX, AxisPhase::PlusX)
        };
        let first = body.clone().then(&gate(half, read1, false)?);
        let second = body.then(&gate(half, read2, false)?);
        let laser = PulseSequence::from_segments(vec![PulseSegment::laser(LaserMode::Init, LASER_US)]);
        let swap = gate(GateKind::Swap, AxisPhase::PlusX, lab.compile.synchronize)?;
        let (store, retrieve) = if self.memory {
            (swap.clone().then(&laser), laser.then(&swap))
        } else {
            (PulseSequence::new(), PulseSequence::new())
        };
        Ok(Blocks { first, second, store, retrieve })
    }

    /// Smallest separation leaving a non-negative storage delay.
    pub fn min_separation(&self, lab: &Lab) -> Result<f64> {
        let b = self.blocks(lab)?;
        Ok(b.first.total_duration() + b.store.total_duration() + b.retrieve.total_duration())
    }
}

/// Runs the two-block correlation sequence over the separation axis.
///
/// Between the blocks the electron coherence left by the first block is
/// discarded: the storage delay is far longer than T2*, and the readout of the
/// second block depends only on the stored population.
pub fn run_correlation(lab: &Lab, spec: &CorrelationSpec, seed: u64) -> Result<CorrelationResult> {
    spec.validate()?;
    let blocks = spec.blocks(lab)?;
    let min = spec.min_separation(lab)?;
    if spec.t_axis.iter().any(|&t| t < min - 1e-12) {
        return Err(SpinLabError::config("t_axis", format!("separations must be at least {min:.6} us")));
    }
    let amplitude = spec.field.detuning_amplitude(lab.system.config.gamma_e);
    let rho0 = DensityMatrix::basis_state(2);
    let l1 = blocks.first.total_duration();
    let sys = &lab.system;

    let expected = par_points(spec.t_axis.len(), |k| {
        let t = spec.t_axis[k];
        let delay = (t - min).max(0.0);
        let middle = blocks.store.clone().then(&PulseSequence::from_segments(vec![PulseSegment::idle(delay)])).then(&blocks.retrieve);
        let point_seed = derive_seed(seed, "correlation", k as u64);
        let ps: Vec<f64> = (0..spec.phase_samples)
            .into_par_iter()
            .map(|j| {
                let mut rng = trajectory_rng(point_seed, j as u64);
                let ac = AcDetuning { amplitude, frequency: spec.field.f_ac, phase: rng.random::<f64>() * TAU };
                let opts = |start| TrajectoryOptions { extra: Some(&ac), start_time: start, lenient_frame: false };
                let rho = run_trajectory(&blocks.first, sys, &rho0, &lab.noise, &mut rng, &opts(0.0))?;
                let rho = dephase_electron(&rho, 0.0);
                // storage holds populations only, so the field is left out there
                let store = TrajectoryOptions { start_time: l1, ..Default::default() };
                let rho = run_trajectory(&middle, sys, &rho, &lab.noise, &mut rng, &store)?;
                let rho = run_trajectory(&blocks.second, sys, &rho, &lab.noise, &mut rng, &opts(t))?;
                Ok(rho.electron_up())
            })
            .collect::<Result<_>>()?;
        Ok(ps.iter().sum::<f64>() / spec.phase_samples as f64)
    })?;

    let mut record = ExperimentRecord::new("correlation", "separation", "us", spec.shots);
    record.meta("memory", spec.memory);
    record.meta("f_ac_mhz", spec.field.f_ac);
    record.meta("amplitude_ut", spec.field.amplitude_ut);
    record.meta("n_pulses", spec.n_pulses);
    record.meta("tau_us", spec.tau);
    record.meta("phase_samples", spec.phase_samples);
    record.meta("seed", seed);
    let mut p_values = Vec::with_capacity(expected.len());
    for (k, (&t, &p)) in spec.t_axis.iter().zip(&expected).enumerate() {
        let r = lab.read(p, spec.shots, seed, k as u64);
        let est = r.population_estimate.clamp(0.0, 1.0);
        record.push(t, r.counts_signal, r.counts_reference, est);
        p_values.push(est);
    }
    record.extra.push(("expected".into(), expected.clone()));

    let spectrum = spectrum_and_linewidth(&spec.t_axis, &p_values)?;
    let step = spec.t_axis[1] - spec.t_axis[0];
    let frequency_estimate = unfold_alias(spectrum.peak_frequency, step, spec.sampling_reference);
    let envelope_fit = fit_damped_cosine(&spec.t_axis, &p_values, None).ok();
    let envelope_tau = envelope_fit.as_ref().map_or(f64::NAN, |f| f.value("tau"));
    Ok(CorrelationResult {
        t_axis: spec.t_axis.clone(),
        p_values,
        expected,
        phi0: spec.phi0(lab),
        envelope_fit,
        envelope_tau,
        linewidth_khz: spectrum.fwhm * 1e3,
        spectrum,
        frequency_estimate,
        record,
    })
}
