use super::{check_shots, derive_seed, electron_down_mixed, linspace, par_points, Lab};
use crate::error::{Result, SpinLabError};
use crate::noise::ExperimentRecord;
use crate::pulse::{PulseSegment, PulseSequence, Tone, TrajectoryOptions};
use crate::spin::Channel;

/// Pulsed ODMR sweep: one square MW pulse per frequency, then readout.
#[derive(Clone, Debug, PartialEq)]
pub struct OdmrSpec {
    pub start_mhz: f64,
    pub stop_mhz: f64,
    pub points: usize,
    /// Effective Rabi frequency on MW1.
    pub rabi_mhz: f64,
    /// Pulse length; defaults to the MW1 pi time.
    pub duration: Option<f64>,
    pub shots: u64,
}

impl OdmrSpec {
    pub fn pulse_length(&self) -> f64 {
        self.duration.unwrap_or(0.5 / self.rabi_mhz)
    }

    fn validate(&self) -> Result<()> {
        check_shots(self.shots)?;
        if !(self.start_mhz > 0.0 && self.stop_mhz > self.start_mhz && self.points >= 2) {
            return Err(SpinLabError::Domain("ODMR span needs 0 < start < stop and at least 2 points".into()));
        }
        if !(self.rabi_mhz > 0.0 && self.pulse_length() > 0.0 && self.pulse_length().is_finite()) {
            return Err(SpinLabError::Domain("ODMR drive and duration must be positive".into()));
        }
        Ok(())
    }
}

/// Electron-up population vs MW frequency. Off-resonant points simply stay
/// dark; a span that misses every line is flat rather than an error.
pub fn run_odmr(lab: &Lab, spec: &OdmrSpec, seed: u64) -> Result<ExperimentRecord> {
    spec.validate()?;
    let amplitude = lab.mw_amplitude(spec.rabi_mhz);
    let duration = spec.pulse_length();
    let freqs = linspace(spec.start_mhz, spec.stop_mhz, spec.points);
    let rho0 = electron_down_mixed();
    let opts = TrajectoryOptions { lenient_frame: true, ..Default::default() };
    let expected = par_points(freqs.len(), |k| {
        let tone = Tone { frequency: freqs[k], amplitude, phase: 0.0 };
        let seq = PulseSequence::from_segments(vec![PulseSegment::drive(Channel::Mw, vec![tone], duration, "odmr")]);
        Ok(lab.ensemble(&seq, &rho0, derive_seed(seed, "odmr", k as u64), &opts)?.electron_up())
    })?;

    let mut rec = ExperimentRecord::new("odmr", "frequency", "MHz", spec.shots);
    rec.meta("rabi_mhz", spec.rabi_mhz);
    rec.meta("pulse_us", duration);
    rec.meta("seed", seed);
    for (k, (&f, &p)) in freqs.iter().zip(&expected).enumerate() {
        let r = lab.read(p, spec.shots, seed, k as u64);
        rec.push(f, r.counts_signal, r.counts_reference, r.population_estimate);
    }
    rec.extra.push(("expected".into(), expected));
    Ok(rec)
}
