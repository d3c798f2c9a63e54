//! Rotating-wave propagation in the interaction frame of the static Hamiltonian.
//!
//! Every state handled here is expressed in the dressed basis and rotated by
//! `exp(+i 2 pi E t)`, so free evolution is the identity. A tone of amplitude
//! `W`, frequency `f` and phase `p` contributes, for each level pair `(a, b)`,
//! the two terms `W D_ab e^{+-ip} e^{i 2 pi (w_ab +- f) t}`. Terms within the
//! resonance window are kept exactly, in a frame whose per-level rates make
//! them static; the rest are folded in as second-order light shifts.

use std::f64::consts::TAU;

use num_complex::Complex;

use super::sequence::{PulseSegment, PulseSequence, SegmentKind};
use super::system::SpinSystem;
use crate::error::{Result, SpinLabError};
use crate::linalg::{unitary_step, Mat4};
use crate::spin::DensityMatrix;

/// Tones must lie within this distance (MHz) of a transition.
pub const RESONANCE_WINDOW_MHZ: f64 = 50.0;

/// Longitudinal electron detuning `delta(t)` in MHz, entering as `delta S_z`.
pub trait Detuning: Sync {
    /// `int_t0^t1 delta dt` (MHz us).
    fn integral(&self, t0: f64, t1: f64) -> f64;
    /// Longest sub-step (us) over which a piecewise-constant average is adequate.
    fn max_step(&self) -> f64;
}

/// Sum of two detuning sources.
pub struct Combined<'a>(pub &'a dyn Detuning, pub &'a dyn Detuning);

impl Detuning for Combined<'_> {
    fn integral(&self, t0: f64, t1: f64) -> f64 {
        self.0.integral(t0, t1) + self.1.integral(t0, t1)
    }
    fn max_step(&self) -> f64 {
        self.0.max_step().min(self.1.max_step())
    }
}

/// Options of [`propagate_rwa_with`].
#[derive(Clone, Copy, Debug)]
pub struct RwaOptions {
    /// Reject tones that are not near any transition. Swept-frequency
    /// experiments turn this off and let far tones act as pure light shifts.
    pub strict_frame: bool,
    /// Absolute time (us) at which the sequence starts.
    pub start_time: f64,
}

impl Default for RwaOptions {
    fn default() -> Self {
        Self { strict_frame: true, start_time: 0.0 }
    }
}

/// Static pieces of one drive segment in its rotating frame.
#[derive(Clone, Debug)]
pub(crate) struct SegmentFrame {
    /// Near-resonant couplings plus frame rates and light shifts on the diagonal.
    pub h: Mat4<f64>,
    /// Frame rates `r_k` (MHz): `psi_I = diag(e^{i 2 pi r t}) chi`.
    pub rates: [f64; 4],
    /// Whether any off-diagonal coupling survived.
    pub coupled: bool,
}

pub(crate) fn segment_frame(seg: &PulseSegment, sys: &SpinSystem, strict: bool) -> Result<SegmentFrame> {
    let mut shift = [0.0; 4];
    let mut near: Vec<(usize, usize, Complex<f64>, f64)> = Vec::new();
    if let SegmentKind::Drive(channel) = seg.kind {
        let d = sys.drive(channel);
        let e = sys.energies();
        for tone in &seg.tones {
            let (_, dist) = sys.table.nearest(tone.frequency);
            if strict && dist > RESONANCE_WINDOW_MHZ {
                return Err(SpinLabError::Frame { frequency: tone.frequency, window: RESONANCE_WINDOW_MHZ });
            }
            let (gain, dphi) =
                if channel == crate::spin::Channel::Mw { sys.transfer.response(tone.frequency) } else { (1.0, 0.0) };
            let amp = tone.amplitude * gain;
            let phase = tone.phase + dphi;
            if amp == 0.0 {
                continue;
            }
            for a in 0..4 {
                for b in (a + 1)..4 {
                    let dab = d.m[a][b];
                    if dab.norm() < 1e-14 {
                        continue;
                    }
                    let w = e[a] - e[b];
                    for (g, nu) in [
                        (dab * Complex::from_polar(amp, phase), w + tone.frequency),
                        (dab * Complex::from_polar(amp, -phase), w - tone.frequency),
                    ] {
                        if nu.abs() <= RESONANCE_WINDOW_MHZ {
                            match near.iter_mut().find(|x| x.0 == a && x.1 == b) {
                                Some(x) if (x.3 - nu).abs() < 1e-9 => x.2 += g,
                                Some(_) => {
                                    return Err(SpinLabError::Frame {
                                        frequency: tone.frequency,
                                        window: RESONANCE_WINDOW_MHZ,
                                    })
                                }
                                None => near.push((a, b, g, nu)),
                            }
                        } else {
                            let s = g.norm_sqr() / nu;
                            shift[a] += s;
                            shift[b] -= s;
                        }
                    }
                }
            }
        }
    }
    let rates = frame_rates(&near).ok_or_else(|| SpinLabError::Frame {
        frequency: seg.tones.first().map_or(0.0, |t| t.frequency),
        window: RESONANCE_WINDOW_MHZ,
    })?;
    let mut h = Mat4::zeros();
    for &(a, b, g, _) in &near {
        h.m[a][b] = g;
        h.m[b][a] = g.conj();
    }
    for k in 0..4 {
        h.m[k][k] = Complex::new(rates[k] + shift[k], 0.0);
    }
    Ok(SegmentFrame { h, rates, coupled: !near.is_empty() })
}

/// Solves `r_a - r_b = nu_ab` over the coupling graph, rooting each connected
/// component at zero. `None` if a cycle is inconsistent.
fn frame_rates(near: &[(usize, usize, Complex<f64>, f64)]) -> Option<[f64; 4]> {
    let mut r = [0.0; 4];
    let mut seen = [false; 4];
    for root in 0..4 {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![root];
        while let Some(k) = stack.pop() {
            for &(a, b, _, nu) in near {
                let (next, val) = if a == k {
                    (b, r[k] - nu)
                } else if b == k {
                    (a, r[k] + nu)
                } else {
                    continue;
                };
                if seen[next] {
                    if (r[next] - val).abs() > 1e-9 * (1.0 + nu.abs()) {
                        return None;
                    }
                } else {
                    seen[next] = true;
                    r[next] = val;
                    stack.push(next);
                }
            }
        }
    }
    Some(r)
}

fn frame_diag(rates: &[f64; 4], t: f64) -> [Complex<f64>; 4] {
    std::array::from_fn(|k| Complex::from_polar(1.0, TAU * rates[k] * t))
}

/// `diag(a) M diag(b)^*`.
fn sandwich(a: &[Complex<f64>; 4], m: &Mat4<f64>, b: &[Complex<f64>; 4]) -> Mat4<f64> {
    Mat4::from_fn(|i, j| a[i] * m.m[i][j] * b[j].conj())
}

/// Interaction-frame propagator of one non-laser segment over `[t0, t0 + duration]`.
pub(crate) fn segment_unitary(
    seg: &PulseSegment,
    sys: &SpinSystem,
    t0: f64,
    detuning: Option<&dyn Detuning>,
    strict: bool,
) -> Result<Mat4<f64>> {
    let dur = seg.duration;
    if dur == 0.0 {
        return Ok(Mat4::identity());
    }
    let frame = segment_frame(seg, sys, strict)?;
    let t1 = t0 + dur;
    if !frame.coupled {
        // diagonal: exact, no sub-stepping
        let phi = detuning.map_or(0.0, |d| d.integral(t0, t1));
        let d: [Complex<f64>; 4] = std::array::from_fn(|k| {
            Complex::from_polar(1.0, -TAU * (frame.h.m[k][k].re * dur + sys.sz[k] * phi))
        });
        return Ok(Mat4::from_fn(|i, j| if i == j { d[i] } else { Complex::new(0.0, 0.0) }));
    }
    let inner = match detuning {
        None => unitary_step(&frame.h, dur),
        Some(det) => {
            let n = (dur / det.max_step()).ceil().max(1.0) as usize;
            let h = dur / n as f64;
            let mut u = Mat4::identity();
            for k in 0..n {
                let a = t0 + k as f64 * h;
                let mean = det.integral(a, a + h) / h;
                let mut hk = frame.h;
                for (i, s) in sys.sz.iter().enumerate() {
                    hk.m[i][i].re += s * mean;
                }
                u = unitary_step(&hk, h) * u;
            }
            u
        }
    };
    Ok(sandwich(&frame_diag(&frame.rates, t1), &inner, &frame_diag(&frame.rates, t0)))
}

/// Interaction-frame propagator of a laser-free sequence starting at `start`.
pub fn rwa_unitary(seq: &PulseSequence, sys: &SpinSystem, start: f64) -> Result<Mat4<f64>> {
    seq.validate()?;
    let mut u = Mat4::identity();
    let mut t = start;
    for seg in &seq.segments {
        if let SegmentKind::Laser(super::LaserMode::Init) = seg.kind {
            return Err(SpinLabError::Domain("laser initialization is not unitary".into()));
        }
        u = segment_unitary(seg, sys, t, None, true)? * u;
        t += seg.duration;
    }
    Ok(u)
}

/// Noiseless RWA propagation from `t = 0`.
pub fn propagate_rwa(seq: &PulseSequence, sys: &SpinSystem, rho0: &DensityMatrix<f64>) -> Result<DensityMatrix<f64>> {
    propagate_rwa_with(seq, sys, rho0, None, &RwaOptions::default())
}

/// RWA propagation with an optional deterministic detuning (e.g. an AC field).
pub fn propagate_rwa_with(
    seq: &PulseSequence,
    sys: &SpinSystem,
    rho0: &DensityMatrix<f64>,
    detuning: Option<&dyn Detuning>,
    opts: &RwaOptions,
) -> Result<DensityMatrix<f64>> {
    seq.validate()?;
    sys.check_laser()?;
    let mut rho = *rho0;
    let mut t = opts.start_time;
    for seg in &seq.segments {
        match seg.kind {
            SegmentKind::Laser(super::LaserMode::Init) => rho = sys.laser_init(&rho, t + seg.duration),
            SegmentKind::Laser(super::LaserMode::Read) => {}
            _ => {
                let u = segment_unitary(seg, sys, t, detuning, opts.strict_frame)?;
                rho = rho.evolve(&u);
            }
        }
        t += seg.duration;
    }
    Ok(rho)
}
