use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use super::{check_shots, derive_seed, par_points, Lab};
use crate::error::{Result, SpinLabError};
use crate::fit::{fit_power_law, fit_stretched_exponential_fixed_offset, FitResult};
use crate::noise::{
    cpmg_sensitivity, cpmg_transverse_sensitivity, decoherence_functional, ExperimentRecord, PulseTimes,
};
use crate::pulse::{
    compile_gate, default_exact_step, propagate_exact_with, run_trajectory, trajectory_rng, AcDetuning, AxisPhase,
    CompileOptions, Detuning, DriveAmplitudes, GateKind, GateSpec, PulseSegment, PulseSequence, TrajectoryOptions,
};
use crate::spin::{DensityMatrix, TransitionLabel};

/// Phase of the sensed field relative to the start of each sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AcPhase {
    Fixed(f64),
    /// Uniform in `[0, 2 pi)`, drawn afresh for every shot.
    RandomPerShot,
}

/// Longitudinal AC field on the electron, `B cos(2 pi f t + theta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcFieldSpec {
    pub f_ac: f64,
    /// Peak field in uT.
    pub amplitude_ut: f64,
    pub phase: AcPhase,
}

impl AcFieldSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_ac > 0.0 && self.f_ac.is_finite()) {
            return Err(SpinLabError::config("field.f_ac", "must be finite and > 0"));
        }
        if !(self.amplitude_ut >= 0.0 && self.amplitude_ut.is_finite()) {
            return Err(SpinLabError::config("field.amplitude_ut", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Peak electron detuning in MHz for a gyromagnetic ratio in MHz/T.
    pub fn detuning_amplitude(&self, gamma_e: f64) -> f64 {
        gamma_e * self.amplitude_ut * 1e-6
    }

    /// Half inter-pulse spacing at which the `k`-th harmonic of the filter
    /// meets the field, for instantaneous pulses.
    pub fn resonant_tau(&self, k: usize) -> f64 {
        k as f64 / (4.0 * self.f_ac)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpmgEngine {
    /// Gaussian filter-function decay, with the AC phase from the same
    /// sensitivity function.
    Analytic,
    /// Trajectory average of the compiled pulse sequence.
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpmgAxis {
    /// Total free evolution `2 N tau`.
    TotalTime,
    /// The half spacing `tau` itself.
    Tau,
}

/// `pi/2(+y) - (tau - pi(+x) - tau)^N - pi/2(+-y)` on MW1, starting from
/// electron down with the nucleus up.
#[derive(Clone, Debug, PartialEq)]
pub struct CpmgSpec {
    pub n_pulses: usize,
    /// Half inter-pulse spacings, us.
    pub tau: Vec<f64>,
    /// Effective Rabi frequency of the MW pulses; `None` means instantaneous
    /// pulses, which only the analytic engine supports.
    pub rabi_mhz: Option<f64>,
    pub engine: CpmgEngine,
    pub axis: CpmgAxis,
    pub field: Option<AcFieldSpec>,
    pub shots: u64,
}

impl CpmgSpec {
    pub fn new(n_pulses: usize, tau: Vec<f64>) -> Self {
        Self {
            n_pulses,
            tau,
            rabi_mhz: Some(50.0),
            engine: CpmgEngine::Analytic,
            axis: CpmgAxis::TotalTime,
            field: None,
            shots: 10_000,
        }
    }

    /// `(t_pi/2, t_pi)`, zero for instantaneous pulses.
    pub fn pulse_lengths(&self) -> (f64, f64) {
        self.rabi_mhz.map_or((0.0, 0.0), |r| (0.25 / r, 0.5 / r))
    }

    pub fn validate(&self) -> Result<()> {
        check_shots(self.shots)?;
        if self.n_pulses == 0 {
            return Err(SpinLabError::config("n_pulses", "must be at least 1"));
        }
        if self.tau.is_empty() || self.tau.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(SpinLabError::config("tau", "needs at least one finite value >= 0"));
        }
        if let Some(r) = self.rabi_mhz {
            if !(r > 0.0 && r.is_finite()) {
                return Err(SpinLabError::config("rabi_mhz", "must be finite and > 0"));
            }
        } else if self.engine == CpmgEngine::MonteCarlo {
            return Err(SpinLabError::config("rabi_mhz", "the Monte-Carlo engine needs finite pulses"));
        }
        if let Some(f) = &self.field {
            f.validate()?;
        }
        Ok(())
    }

    fn x(&self, tau: f64) -> f64 {
        match self.axis {
            CpmgAxis::TotalTime => 2.0 * self.n_pulses as f64 * tau,
            CpmgAxis::Tau => tau,
        }
    }

    fn sensitivity(&self, tau: f64) -> (PulseTimes, f64) {
        match self.rabi_mhz {
            None => (PulseTimes::Cpmg(self.n_pulses), 2.0 * self.n_pulses as f64 * tau),
            Some(_) => {
                let (t2, t1) = self.pulse_lengths();
                cpmg_sensitivity(self.n_pulses, tau, t2, t1)
            }
        }
    }

    fn transverse(&self, tau: f64) -> PulseTimes {
        let (t2, t1) = self.pulse_lengths();
        cpmg_transverse_sensitivity(self.n_pulses, tau, t2, t1)
    }
}

fn start_state() -> DensityMatrix<f64> {
    DensityMatrix::basis_state(2)
}

/// The `+y` and `-y` readout variants of the compiled sequence.
fn sequences(lab: &Lab, spec: &CpmgSpec, tau: f64) -> Result<[PulseSequence; 2]> {
    let rabi = spec.rabi_mhz.ok_or_else(|| SpinLabError::config("rabi_mhz", "finite pulses required"))?;
    let drive = DriveAmplitudes { mw: lab.mw_amplitude(rabi), rf: lab.drive.rf };
    let opts = CompileOptions { synchronize: false };
    let gate = |kind, axis| compile_gate(&GateSpec::new(kind, axis), &lab.system.table, &lab.calibration, &drive, &opts);
    let half = GateKind::SelE(TransitionLabel::Mw1, FRAC_PI_2);
    let pi = gate(GateKind::SelE(TransitionLabel::Mw1, PI), AxisPhase::PlusX)?;
    let mut body = gate(half, AxisPhase::PlusY)?;
    for _ in 0..spec.n_pulses {
        body.push(PulseSegment::idle(tau));
        body.extend(&pi);
        body.push(PulseSegment::idle(tau));
    }
    let plus = body.clone().then(&gate(half, AxisPhase::PlusY)?);
    let minus = body.then(&gate(half, AxisPhase::MinusY)?);
    Ok([plus, minus])
}

fn ac_detuning(lab: &Lab, field: &AcFieldSpec) -> AcDetuning {
    let theta = match field.phase {
        AcPhase::Fixed(t) => t,
        AcPhase::RandomPerShot => 0.0,
    };
    AcDetuning {
        amplitude: field.detuning_amplitude(lab.system.config.gamma_e),
        frequency: field.f_ac,
        phase: theta,
    }
}

/// Ensemble electron-up populations of the two readout variants, with the
/// same noise realization (and field phase) for both members of each pair.
fn mc_pair(
    lab: &Lab,
    seqs: &[PulseSequence; 2],
    field: Option<(AcDetuning, bool)>,
    trajectories: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    for s in seqs {
        s.validate()?;
    }
    lab.noise.validate()?;
    let rho0 = start_state();
    let runs: Vec<(f64, f64)> = (0..trajectories)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k as u64);
            let ac = field.map(|(mut d, random)| {
                if random {
                    d.phase = rng.random::<f64>() * TAU;
                }
                d
            });
            let opts = TrajectoryOptions { extra: ac.as_ref().map(|d| d as &dyn Detuning), ..Default::default() };
            let mut twin = rng.clone();
            let a = run_trajectory(&seqs[0], &lab.system, &rho0, &lab.noise, &mut rng, &opts)?.electron_up();
            let b = run_trajectory(&seqs[1], &lab.system, &rho0, &lab.noise, &mut twin, &opts)?.electron_up();
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let n = trajectories as f64;
    let (a, b) = runs.iter().fold((0.0, 0.0), |acc, r| (acc.0 + r.0, acc.1 + r.1));
    Ok((a / n, b / n))
}

fn analytic_coherence(lab: &Lab, spec: &CpmgSpec, tau: f64) -> Result<f64> {
    let (pulses, total) = spec.sensitivity(tau);
    if total <= 0.0 {
        return Ok(1.0);
    }
    let chi = if lab.noise.is_dephasing_free() { 0.0 } else { decoherence_functional(&pulses, total, &lab.noise)? };
    let free = 2.0 * spec.n_pulses as f64 * tau;
    let relax = (-free / (2.0 * lab.noise.t1_electron)).exp();
    let ac = match &spec.field {
        None => 1.0,
        Some(f) => {
            let w = TAU * f.f_ac;
            let a = TAU * f.detuning_amplitude(lab.system.config.gamma_e);
            ac_coherence(a, pulses.response(w, total), spec.transverse(tau).response(w, total), f.phase)
        }
    };
    Ok((-chi).exp() * relax * ac)
}

/// Field phases in the random-phase average once the transverse term makes
/// it differ from `J0`; the integrand is smooth and periodic, so the
/// trapezoid rule converges geometrically.
const PHASE_QUADRATURE: usize = 64;

/// `cos |Phi|` for the first-order rotation
/// `Phi = a (Re e^{i theta} y1, Re e^{i theta} y2)` of the coherence, averaged
/// over `theta` for a random phase.
fn ac_coherence(a: f64, y1: Complex<f64>, y2: Complex<f64>, phase: AcPhase) -> f64 {
    let at = |theta: f64| {
        let r = Complex::from_polar(1.0, theta);
        (a * (r * y1).re).hypot(a * (r * y2).re).cos()
    };
    match phase {
        AcPhase::Fixed(theta) => at(theta),
        AcPhase::RandomPerShot if y2.norm() == 0.0 => libm::j0(a * y1.norm()),
        AcPhase::RandomPerShot => {
            (0..PHASE_QUADRATURE).map(|j| at(TAU * j as f64 / PHASE_QUADRATURE as f64)).sum::<f64>()
                / PHASE_QUADRATURE as f64
        }
    }
}

/// Coherence vs the chosen axis. The `coherence` column is
/// `p(+y) - p(-y)` from the counts, normalized to the noiseless, field-free
/// value of the same compiled sequence; `expected` is the same quantity
/// before shot noise.
pub fn run_cpmg(lab: &Lab, spec: &CpmgSpec, seed: u64) -> Result<ExperimentRecord> {
    spec.validate()?;
    let pairs = par_points(spec.tau.len(), |k| {
        let tau = spec.tau[k];
        match spec.engine {
            CpmgEngine::Analytic => {
                let c = analytic_coherence(lab, spec, tau)?;
                Ok((0.5 * (1.0 + c), 0.5 * (1.0 - c), 1.0))
            }
            CpmgEngine::MonteCarlo => {
                let seqs = sequences(lab, spec, tau)?;
                let field = spec.field.map(|f| (ac_detuning(lab, &f), f.phase == AcPhase::RandomPerShot));
                let random = matches!(field, Some((_, true)));
                let traj = if lab.noise.is_dephasing_free() && !random { 1 } else { lab.trajectories };
                let (p, m) = mc_pair(lab, &seqs, field, traj, derive_seed(seed, "cpmg", k as u64))?;
                let (rp, rm) = mc_pair(&lab.noiseless(), &seqs, None, 1, 0)?;
                Ok((p, m, rp - rm))
            }
        }
    })?;

    let (x_label, x_unit) = match spec.axis {
        CpmgAxis::TotalTime => ("total_time", "us"),
        CpmgAxis::Tau => ("tau", "us"),
    };
    let mut rec = ExperimentRecord::new("cpmg", x_label, x_unit, spec.shots);
    rec.meta("n_pulses", spec.n_pulses);
    rec.meta("engine", format!("{:?}", spec.engine));
    rec.meta("rabi_mhz", spec.rabi_mhz.map_or("instantaneous".to_string(), |r| r.to_string()));
    if let Some(f) = &spec.field {
        rec.meta("field", format!("f_ac={} MHz, amplitude={} uT, phase={:?}", f.f_ac, f.amplitude_ut, f.phase));
    }
    rec.meta("seed", seed);
    let mut minus_sig = Vec::new();
    let mut minus_ref = Vec::new();
    let mut coherence = Vec::new();
    let mut expected = Vec::new();
    let mut tau_col = Vec::new();
    for (k, (&tau, &(p, m, norm))) in spec.tau.iter().zip(&pairs).enumerate() {
        let a = lab.read(p, spec.shots, seed, 2 * k as u64);
        let b = lab.read(m, spec.shots, seed, 2 * k as u64 + 1);
        rec.push(spec.x(tau), a.counts_signal, a.counts_reference, a.population_estimate);
        minus_sig.push(b.counts_signal as f64);
        minus_ref.push(b.counts_reference as f64);
        coherence.push((a.population_estimate - b.population_estimate) / norm);
        expected.push((p - m) / norm);
        tau_col.push(tau);
    }
    if spec.axis != CpmgAxis::Tau {
        rec.extra.push(("tau_us".into(), tau_col));
    }
    rec.extra.push(("counts_signal_minus".into(), minus_sig));
    rec.extra.push(("counts_reference_minus".into(), minus_ref));
    rec.extra.push(("coherence".into(), coherence));
    rec.extra.push(("expected".into(), expected));
    Ok(rec)
}

/// CPMG contrast vs `tau` under an AC field.
pub fn run_ac_field_scan(lab: &Lab, spec: &CpmgSpec, seed: u64) -> Result<ExperimentRecord> {
    if spec.field.is_none() {
        return Err(SpinLabError::config("field", "an AC field scan needs a field"));
    }
    let spec = CpmgSpec { axis: CpmgAxis::Tau, ..spec.clone() };
    let mut rec = run_cpmg(lab, &spec, seed)?;
    rec.sweep_name = "acscan".into();
    Ok(rec)
}

/// Field phases averaged by [`ac_scan_exact`] for a random-phase field. An
/// `M`-point phase average of `cos(phi cos(theta))` differs from `J0(phi)` by
/// `2 J_M(phi)`, below 1e-6 for `phi < 2`.
pub const EXACT_PHASE_SAMPLES: usize = 8;

/// Noiseless coherence of the `+y` variant from the lab-frame propagator,
/// normalized to the field-free run. A random-phase field is averaged over
/// [`EXACT_PHASE_SAMPLES`] equally spaced phases.
pub fn ac_scan_exact(lab: &Lab, spec: &CpmgSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let field = spec.field.ok_or_else(|| SpinLabError::config("field", "required"))?;
    let phases: Vec<f64> = match field.phase {
        AcPhase::Fixed(theta) => vec![theta],
        AcPhase::RandomPerShot => (0..EXACT_PHASE_SAMPLES).map(|j| TAU * j as f64 / EXACT_PHASE_SAMPLES as f64).collect(),
    };
    let rho0 = start_state();
    par_points(spec.tau.len(), |k| {
        let [plus, _] = sequences(lab, spec, spec.tau[k])?;
        let dt = default_exact_step(&plus, &lab.system);
        let without = propagate_exact_with(&plus, &lab.system, &rho0, dt, None, 0.0)?.electron_up();
        let mut sum = 0.0;
        for &theta in &phases {
            let ac = ac_detuning(lab, &AcFieldSpec { phase: AcPhase::Fixed(theta), ..field });
            sum += 2.0 * propagate_exact_with(&plus, &lab.system, &rho0, dt, Some(&ac), 0.0)?.electron_up() - 1.0;
        }
        Ok(sum / phases.len() as f64 / (2.0 * without - 1.0))
    })
}

/// Location of the minimum of `y` inside `[lo, hi]`, refined by a parabola
/// through the lowest sample and its neighbours.
pub fn find_dip(x: &[f64], y: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let k = (0..x.len()).filter(|&i| x[i] >= lo && x[i] <= hi).min_by(|&a, &b| y[a].total_cmp(&y[b]))?;
    if k == 0 || k + 1 >= x.len() {
        return Some(x[k]);
    }
    let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
    let den = y0 - 2.0 * y1 + y2;
    let h = 0.5 * (x[k + 1] - x[k - 1]);
    let d = if den > 0.0 { (0.5 * (y0 - y2) / den).clamp(-0.5, 0.5) } else { 0.0 };
    Some(x[k] + d * h)
}

/// Coherence-time scaling over an N ladder.
#[derive(Clone, Debug)]
pub struct T2Scaling {
    pub beta: f64,
    pub beta_sigma: f64,
    /// Stretched-exponential fit per N.
    pub per_n: Vec<(usize, FitResult)>,
    pub power_law: FitResult,
}

/// Fits `exp(-(T/T2)^n)` to each record's `coherence` column, then
/// `T2 = a N^beta` in log-log space.
pub fn extract_t2_scaling(records: &[(usize, ExperimentRecord)]) -> Result<T2Scaling> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.0).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 4 {
        return Err(SpinLabError::Fit(format!("need at least 4 distinct N, got {}", ns.len())));
    }
    let mut per_n = Vec::with_capacity(records.len());
    for (n, rec) in records {
        let y = rec
            .column("coherence")
            .ok_or_else(|| SpinLabError::Fit(format!("N = {n}: record has no coherence column")))?;
        let fit = fit_stretched_exponential_fixed_offset(&rec.x, y, 0.0)
            .map_err(|e| SpinLabError::Fit(format!("N = {n}: {e}")))?;
        let span = rec.x.iter().copied().fold(0.0, f64::max);
        let t2 = fit.value("t2");
        if !(t2.is_finite() && t2 < 10.0 * span) {
            return Err(SpinLabError::Fit(format!(
                "N = {n}: no decay within the time axis (T2 = {t2:.3e} us, axis ends at {span:.3e} us)"
            )));
        }
        per_n.push((*n, fit));
    }
    let x: Vec<f64> = per_n.iter().map(|(n, _)| *n as f64).collect();
    let t2: Vec<f64> = per_n.iter().map(|(_, f)| f.value("t2")).collect();
    let power_law = fit_power_law(&x, &t2)?;
    Ok(T2Scaling { beta: power_law.value("beta"), beta_sigma: power_law.sigma("beta"), per_n, power_law })
}
