use super::{check_shots, derive_seed, electron_down_mixed, linspace, par_points, Lab};
use crate::error::{Result, SpinLabError};
use crate::fit::{fit_damped_cosine, FitResult};
use crate::noise::ExperimentRecord;
use crate::pulse::{
    compile_gate, DriveAmplitudes, DualToneCalibration, GateKind, GateSpec, PulseSegment, PulseSequence,
    Tone, TrajectoryOptions,
};
use crate::spin::{DensityMatrix, TransitionLabel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RabiTarget {
    /// A single tone on one line, starting in the line's lower-spin state.
    Line(TransitionLabel),
    /// Both MW lines at once, as in the unconditional electron gates. With
    /// `calibrated = false` the second tone is not corrected for the
    /// transfer function, so the two manifolds rotate at different rates.
    LocalDualTone { calibrated: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RabiSpec {
    pub target: RabiTarget,
    pub max_duration: f64,
    pub points: usize,
    /// Bare tone amplitude in MHz; the lab's compiled drive when `None`.
    pub amplitude: Option<f64>,
    pub shots: u64,
}

/// Population vs pulse length. RF lines are read out through a selective
/// electron pi pulse that maps the flipped nuclear state onto electron up.
pub fn run_rabi(lab: &Lab, spec: &RabiSpec, seed: u64) -> Result<ExperimentRecord> {
    check_shots(spec.shots)?;
    if !(spec.max_duration > 0.0 && spec.max_duration.is_finite() && spec.points >= 2) {
        return Err(SpinLabError::Domain("Rabi sweep needs a positive duration and at least 2 points".into()));
    }
    let table = &lab.system.table;
    let times = linspace(0.0, spec.max_duration, spec.points);

    // drive segment builder, start state, readout suffix and expected Rabi rate
    let (build, rho0, suffix, rate): (Box<dyn Fn(f64) -> PulseSegment + Sync>, _, _, f64) = match spec.target {
        RabiTarget::Line(label) => {
            let tr = *table.get(label);
            let amp = spec.amplitude.unwrap_or(match label.channel() {
                crate::spin::Channel::Mw => lab.drive.mw,
                crate::spin::Channel::Rf => lab.drive.rf,
            });
            let tone = Tone { frequency: tr.frequency, amplitude: amp, phase: 0.0 };
            let build = Box::new(move |t| PulseSegment::drive(label.channel(), vec![tone], t, "rabi"));
            let suffix = match label {
                TransitionLabel::Mw1 | TransitionLabel::Mw2 => PulseSequence::new(),
                // RF1 flips 3 -> 2, RF2 flips 1 -> 0; both targets are then read as electron up
                TransitionLabel::Rf1 => lab.compile(&[GateSpec::x(GateKind::SelE(TransitionLabel::Mw1, std::f64::consts::PI))])?,
                TransitionLabel::Rf2 => lab.compile(&[GateSpec::x(GateKind::SelE(TransitionLabel::Mw2, std::f64::consts::PI))])?,
            };
            (build as Box<dyn Fn(f64) -> PulseSegment + Sync>, DensityMatrix::basis_state(tr.down), suffix, tr.enhancement() * amp)
        }
        RabiTarget::LocalDualTone { calibrated } => {
            let drive = DriveAmplitudes { mw: spec.amplitude.unwrap_or(lab.drive.mw), rf: lab.drive.rf };
            let calib = if calibrated { lab.calibration } else { DualToneCalibration::default() };
            let gate = compile_gate(&GateSpec::x(GateKind::LocalEPi), table, &calib, &drive, &lab.compile)?;
            let seg = gate.segments[0].clone();
            let rate = table.get(TransitionLabel::Mw1).enhancement() * drive.mw;
            let build = Box::new(move |t| PulseSegment { duration: t, ..seg.clone() });
            (build as Box<dyn Fn(f64) -> PulseSegment + Sync>, electron_down_mixed(), PulseSequence::new(), rate)
        }
    };

    let opts = TrajectoryOptions::default();
    let expected = par_points(times.len(), |k| {
        let seq = PulseSequence::from_segments(vec![build(times[k])]).then(&suffix);
        Ok(lab.ensemble(&seq, &rho0, derive_seed(seed, "rabi", k as u64), &opts)?.electron_up())
    })?;

    let mut rec = ExperimentRecord::new("rabi", "duration", "us", spec.shots);
    rec.meta("target", format!("{:?}", spec.target));
    rec.meta("nominal_rabi_mhz", rate);
    rec.meta("seed", seed);
    for (k, (&t, &p)) in times.iter().zip(&expected).enumerate() {
        let r = lab.read(p, spec.shots, seed, k as u64);
        rec.push(t, r.counts_signal, r.counts_reference, r.population_estimate);
    }
    rec.extra.push(("expected".into(), expected));
    Ok(rec)
}

/// Damped-cosine fit of the measured population; `frequency` is the Rabi rate.
pub fn fit_rabi(record: &ExperimentRecord) -> Result<FitResult> {
    fit_damped_cosine(&record.x, &record.population, None)
}
