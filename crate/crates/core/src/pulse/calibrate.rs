use std::f64::consts::{FRAC_PI_2, TAU};

use super::gates::{DriveAmplitudes, DualToneCalibration};
use super::rwa::propagate_rwa;
use super::sequence::{PulseSegment, PulseSequence, Tone};
use super::system::SpinSystem;
use crate::error::{Result, SpinLabError};
use crate::spin::{Channel, DensityMatrix, TransitionLabel};

/// Nominal pi/2 single-tone pulse on `label`; returns the realized Rabi
/// rate (MHz) and the realized rotation axis (rad).
fn probe(sys: &SpinSystem, label: TransitionLabel, amplitude: f64) -> Result<(f64, f64)> {
    let tr = sys.table.get(label);
    let nominal = tr.enhancement() * amplitude;
    let dur = 1.0 / (4.0 * nominal);
    let arg = tr.matrix_element.arg();
    let phase = if tr.up_is_upper { arg } else { -arg };
    let seg = PulseSegment::drive(Channel::Mw, vec![Tone { frequency: tr.frequency, amplitude, phase }], dur, "probe");
    let rho = propagate_rwa(&PulseSequence::from_segments(vec![seg]), sys, &DensityMatrix::basis_state(tr.down))?;
    let p = rho.populations()[tr.up].clamp(0.0, 1.0);
    let theta = 2.0 * p.sqrt().asin();
    // R_phi(theta)|dn> has <up|rho|dn> = -i e^{-i phi} sin cos
    let axis = -FRAC_PI_2 - rho.matrix().m[tr.up][tr.down].arg();
    Ok((theta / (TAU * dur), axis))
}

/// Second-tone corrections that equalize the realized Rabi frequencies and
/// rotation axes of the two MW lines under the system's transfer model.
pub fn calibrate_dual_tone(sys: &SpinSystem, drive: &DriveAmplitudes) -> Result<DualToneCalibration> {
    let t1 = *sys.table.get(TransitionLabel::Mw1);
    let t2 = *sys.table.get(TransitionLabel::Mw2);
    for t in [&t1, &t2] {
        if !sys.transfer.is_finite_at(t.frequency) {
            return Err(SpinLabError::Calibration(format!("transfer model not usable at {:.3} MHz", t.frequency)));
        }
    }
    if !(drive.mw > 0.0) {
        return Err(SpinLabError::Calibration("MW drive amplitude must be positive".into()));
    }
    let omega = t1.enhancement() * drive.mw;
    let base2 = omega / t2.enhancement();
    let (rate1, axis1) = probe(sys, TransitionLabel::Mw1, drive.mw)?;
    let f = |s: f64| -> Result<f64> { Ok(probe(sys, TransitionLabel::Mw2, base2 * s)?.0 / rate1 - 1.0) };

    // secant on the amplitude scale
    let (mut s0, mut f0) = (1.0, f(1.0)?);
    let mut s1 = 1.0 / (1.0 + f0);
    let mut f1 = f(s1)?;
    let mut converged = f0.abs() < 1e-10;
    if converged {
        s1 = s0;
    }
    for _ in 0..50 {
        if converged || f1.abs() < 1e-10 {
            converged = true;
            break;
        }
        if f1 == f0 {
            break;
        }
        let s2 = (s1 - f1 * (s1 - s0) / (f1 - f0)).max(1e-6);
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = f(s1)?;
    }
    if !(converged || f1.abs() < 1e-10) {
        return Err(SpinLabError::Calibration(format!("amplitude root search stalled at residual {f1:.3e}")));
    }
    let (_, axis2) = probe(sys, TransitionLabel::Mw2, base2 * s1)?;
    let err = axis1 - axis2;
    let offset = if t2.up_is_upper { err } else { -err };
    Ok(DualToneCalibration {
        amplitude_scale_2: s1,
        phase_offset_2: (offset + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::system::TransferModel;
    use crate::spin::SystemConfig;

    #[test]
    fn flat_transfer_gives_identity() {
        let sys = SpinSystem::new(&SystemConfig::hbn_default()).unwrap();
        let c = calibrate_dual_tone(&sys, &DriveAmplitudes { mw: 2.0, rf: 0.01 }).unwrap();
        assert!((c.amplitude_scale_2 - 1.0).abs() < 1e-6, "{c:?}");
        // light shifts tilt the axes by a few 1e-5 rad
        assert!(c.phase_offset_2.abs() < 1e-4, "{c:?}");
    }

    #[test]
    fn ten_percent_loss_is_inverted() {
        let base = SpinSystem::new(&SystemConfig::hbn_default()).unwrap();
        let f1 = base.table.get(TransitionLabel::Mw1).frequency;
        let f2 = base.table.get(TransitionLabel::Mw2).frequency;
        let sys = base.with_transfer(TransferModel { points: vec![(f1, 1.0, 0.0), (f2, 0.9, 0.3)] });
        let c = calibrate_dual_tone(&sys, &DriveAmplitudes { mw: 2.0, rf: 0.01 }).unwrap();
        assert!((c.amplitude_scale_2 - 1.0 / 0.9).abs() < 1e-4, "{c:?}");
        assert!((c.phase_offset_2 + 0.3).abs() < 1e-4, "{c:?}");
    }
}
