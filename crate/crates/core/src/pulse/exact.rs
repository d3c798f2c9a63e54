//! Lab-frame reference propagator: the full time-dependent Hamiltonian,
//! piecewise constant over steps much shorter than any carrier period.

use std::f64::consts::PI;

use super::rwa::Detuning;
use super::sequence::{LaserMode, PulseSequence, SegmentKind};
use super::system::SpinSystem;
use crate::error::{Result, SpinLabError};
use crate::linalg::{unitary_step, Mat4};
use crate::spin::{drive_operator, operators, Channel, DensityMatrix};

/// `(frequency, amplitude, phase)` of one drive tone as seen by the spins.
type Tone3 = (f64, f64, f64);

/// Highest frequency (MHz) the integrator must resolve.
pub fn max_frequency(seq: &PulseSequence, sys: &SpinSystem) -> f64 {
    sys.hamiltonian.max_frequency().max(seq.max_tone_frequency())
}

/// Default step `1 / (40 f_max)`.
pub fn default_exact_step(seq: &PulseSequence, sys: &SpinSystem) -> f64 {
    1.0 / (40.0 * max_frequency(seq, sys))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Lab-frame propagation from `t = 0`; input and output in the same
/// interaction frame as the RWA propagator so the two are directly comparable.
pub fn propagate_exact(
    seq: &PulseSequence,
    sys: &SpinSystem,
    rho0: &DensityMatrix<f64>,
    dt: f64,
) -> Result<DensityMatrix<f64>> {
    propagate_exact_with(seq, sys, rho0, dt, None, 0.0)
}

pub fn propagate_exact_with(
    seq: &PulseSequence,
    sys: &SpinSystem,
    rho0: &DensityMatrix<f64>,
    dt: f64,
    detuning: Option<&dyn Detuning>,
    start: f64,
) -> Result<DensityMatrix<f64>> {
    seq.validate()?;
    sys.check_laser()?;
    let limit = 1.0 / (20.0 * max_frequency(seq, sys));
    if !(dt > 0.0 && dt <= limit) {
        return Err(SpinLabError::StepSize { dt, limit });
    }
    let h0 = sys.hamiltonian.h;
    let d_mw = drive_operator(Channel::Mw, &sys.config);
    let d_rf = drive_operator(Channel::Rf, &sys.config);
    let sz = operators::s::<f64>(2);

    let mut rho = sys.to_lab(rho0.matrix(), start);
    let mut t = start;
    for seg in &seq.segments {
        match seg.kind {
            SegmentKind::Laser(LaserMode::Init) => {
                let end = t + seg.duration;
                // free precession during the pulse, then the reset
                let u = unitary_step(&h0, seg.duration);
                rho = rho.conjugate_by(&u);
                let inter = DensityMatrix::from_matrix_unchecked(sys.from_lab(&rho, end));
                rho = sys.to_lab(sys.laser_init(&inter, end).matrix(), end);
            }
            _ if seg.duration == 0.0 => {}
            _ => {
                let n = (seg.duration / dt).ceil().max(1.0) as usize;
                let h = seg.duration / n as f64;
                let (d, tones): (Option<&Mat4<f64>>, Vec<Tone3>) = match seg.kind {
                    SegmentKind::Drive(Channel::Mw) => (
                        Some(&d_mw),
                        seg.tones
                            .iter()
                            .map(|x| {
                                let (g, p) = sys.transfer.response(x.frequency);
                                (x.frequency, x.amplitude * g, x.phase + p)
                            })
                            .collect(),
                    ),
                    SegmentKind::Drive(Channel::Rf) => {
                        (Some(&d_rf), seg.tones.iter().map(|x| (x.frequency, x.amplitude, x.phase)).collect())
                    }
                    _ => (None, Vec::new()),
                };
                let mut u = Mat4::identity();
                for k in 0..n {
                    let a = t + k as f64 * h;
                    let mid = a + 0.5 * h;
                    let mut hk = h0;
                    if let Some(d) = d {
                        // drive averaged over the step
                        let c: f64 = tones
                            .iter()
                            .map(|&(f, amp, ph)| 2.0 * amp * (2.0 * PI * f * mid + ph).cos() * sinc(PI * f * h))
                            .sum();
                        hk += d.scale_re(c);
                    }
                    if let Some(det) = detuning {
                        hk += sz.scale_re(det.integral(a, a + h) / h);
                    }
                    u = unitary_step(&hk, h) * u;
                }
                rho = rho.conjugate_by(&u);
            }
        }
        t += seg.duration;
    }
    let out = sys.from_lab(&rho, t).hermitian_part();
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::sequence::PulseSegment;
    use crate::spin::SystemConfig;

    #[test]
    fn coarse_step_is_rejected() {
        let sys = SpinSystem::new(&SystemConfig::hbn_default()).unwrap();
        let seq = PulseSequence::from_segments(vec![PulseSegment::idle(0.01)]);
        let r = propagate_exact(&seq, &sys, &DensityMatrix::basis_state(0), 1e-3);
        assert!(matches!(r, Err(SpinLabError::StepSize { .. })));
    }

    #[test]
    fn free_evolution_of_an_eigenstate_is_trivial() {
        let sys = SpinSystem::new(&SystemConfig::hbn_default()).unwrap();
        let seq = PulseSequence::from_segments(vec![PulseSegment::idle(0.013)]);
        let dt = default_exact_step(&seq, &sys);
        let rho = DensityMatrix::basis_state(2);
        let out = propagate_exact(&seq, &sys, &rho, dt).unwrap();
        assert!((*out.matrix() - *rho.matrix()).norm() < 1e-9);
    }
}
