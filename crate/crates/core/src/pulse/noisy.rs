//! Monte-Carlo averaging of RWA propagation over sampled dephasing noise.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::rwa::{segment_unitary, Combined, Detuning};
use super::sequence::{LaserMode, PulseSequence, SegmentKind};
use super::system::SpinSystem;
use crate::error::{Result, SpinLabError};
use crate::linalg::Mat4;
use crate::noise::{free_decay, relaxation_channel, NoiseModel, NoiseSampler};
use crate::spin::DensityMatrix;

/// Idles longer than this many correlation times are dephased with the
/// ensemble factor and the noise process restarts afterwards.
pub const LONG_IDLE_TAU_C: f64 = 20.0;

/// Noise grid step as a fraction of the correlation time.
const GRID_PER_TAU_C: f64 = 20.0;

/// Piecewise-linear detuning through samples `values[k]` at `t0 + k h`.
pub struct SampledDetuning {
    pub t0: f64,
    pub h: f64,
    pub values: Vec<f64>,
}

impl Detuning for SampledDetuning {
    fn integral(&self, a: f64, b: f64) -> f64 {
        let n = self.values.len() - 1;
        let pos = |t: f64| ((t - self.t0) / self.h).clamp(0.0, n as f64);
        let (xa, xb) = (pos(a), pos(b));
        let value = |x: f64| {
            let k = (x.floor() as usize).min(n.saturating_sub(1));
            let w = x - k as f64;
            if n == 0 {
                self.values[0]
            } else {
                self.values[k] * (1.0 - w) + self.values[k + 1] * w
            }
        };
        // integrate cell by cell with the trapezoid rule (exact for linear pieces)
        let mut acc = 0.0;
        let mut x = xa;
        while x < xb {
            let next = (x.floor() + 1.0).min(xb);
            acc += 0.5 * (value(x) + value(next)) * (next - x);
            x = next;
        }
        acc * self.h
    }

    fn max_step(&self) -> f64 {
        self.h
    }
}

/// Per-trajectory options.
#[derive(Clone, Copy, Default)]
pub struct TrajectoryOptions<'a> {
    /// Deterministic detuning added to the noise (e.g. an AC field).
    pub extra: Option<&'a dyn Detuning>,
    pub start_time: f64,
    /// See [`super::RwaOptions::strict_frame`].
    pub lenient_frame: bool,
}

struct NoiseState {
    sampler: NoiseSampler,
    dt: f64,
    tau_c: f64,
}

impl NoiseState {
    /// Samples covering `[t0, t0 + dur]` on a grid no coarser than `dt`.
    fn sample(&mut self, t0: f64, dur: f64, rng: &mut ChaCha8Rng) -> Result<SampledDetuning> {
        let n = (dur / self.dt).ceil().max(1.0) as usize;
        let h = dur / n as f64;
        let mut s = self.sampler.retimed(h)?;
        let mut values = Vec::with_capacity(n + 1);
        values.push(s.value());
        for _ in 0..n {
            values.push(s.step(rng));
        }
        self.sampler = s;
        Ok(SampledDetuning { t0, h, values })
    }

    /// Advances the process over `dur` without recording it.
    fn skip(&mut self, dur: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        if dur > LONG_IDLE_TAU_C * self.tau_c {
            self.sampler.restart(rng);
        } else if dur > 0.0 {
            self.sample(0.0, dur, rng)?;
        }
        Ok(())
    }
}

/// Multiplies electron coherences by `factor`.
fn dephase_electron(rho: &Mat4<f64>, factor: f64) -> Mat4<f64> {
    Mat4::from_fn(|i, j| if i / 2 != j / 2 { rho.m[i][j] * factor } else { rho.m[i][j] })
}

fn diag_phase(sys: &SpinSystem, phi: f64) -> Mat4<f64> {
    let mut u = Mat4::zeros();
    for k in 0..4 {
        u.m[k][k] = Complex::from_polar(1.0, -std::f64::consts::TAU * sys.sz[k] * phi);
    }
    u
}

/// One noise realization drawn from `rng`.
pub fn run_trajectory(
    seq: &PulseSequence,
    sys: &SpinSystem,
    rho0: &DensityMatrix<f64>,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
    opts: &TrajectoryOptions<'_>,
) -> Result<DensityMatrix<f64>> {
    let mut state = if noise.is_dephasing_free() {
        None
    } else {
        let dt = noise.ou_tau_c / GRID_PER_TAU_C;
        let mut sampler = noise.sampler(dt)?;
        sampler.restart(rng);
        Some(NoiseState { sampler, dt, tau_c: noise.ou_tau_c })
    };
    let mut rho = *rho0;
    let mut t = opts.start_time;
    for seg in &seq.segments {
        let dur = seg.duration;
        match seg.kind {
            SegmentKind::Laser(mode) => {
                if let Some(s) = state.as_mut() {
                    s.skip(dur, rng)?;
                }
                rho = relaxation_channel(&rho, dur, noise);
                if mode == LaserMode::Init {
                    rho = sys.laser_init(&rho, t + dur);
                }
            }
            SegmentKind::Idle => {
                let extra = opts.extra.map_or(0.0, |d| d.integral(t, t + dur));
                let mut m = *rho.matrix();
                match state.as_mut() {
                    Some(s) if dur > LONG_IDLE_TAU_C * s.tau_c => {
                        m = dephase_electron(&m, free_decay(noise, dur));
                        s.sampler.restart(rng);
                        m = m.conjugate_by(&diag_phase(sys, extra));
                    }
                    Some(s) if dur > 0.0 => {
                        let samples = s.sample(t, dur, rng)?;
                        m = m.conjugate_by(&diag_phase(sys, extra + samples.integral(t, t + dur)));
                    }
                    _ => m = m.conjugate_by(&diag_phase(sys, extra)),
                }
                rho = relaxation_channel(&DensityMatrix::from_matrix_unchecked(m), dur, noise);
            }
            SegmentKind::Drive(_) => {
                let strict = !opts.lenient_frame;
                let u = match state.as_mut() {
                    Some(s) if dur > 0.0 => {
                        let samples = s.sample(t, dur, rng)?;
                        match opts.extra {
                            Some(e) => segment_unitary(seg, sys, t, Some(&Combined(&samples, e)), strict)?,
                            None => segment_unitary(seg, sys, t, Some(&samples), strict)?,
                        }
                    }
                    _ => segment_unitary(seg, sys, t, opts.extra, strict)?,
                };
                rho = rho.evolve(&u);
            }
        }
        t += dur;
    }
    Ok(DensityMatrix::from_matrix_unchecked(rho.matrix().hermitian_part()))
}

/// Deterministic random stream of trajectory `index` under `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Order-fixed pairwise sum, so results do not depend on the thread count.
pub fn pairwise_sum(items: &[Mat4<f64>]) -> Mat4<f64> {
    match items.len() {
        0 => Mat4::zeros(),
        1 => items[0],
        n => pairwise_sum(&items[..n / 2]) + pairwise_sum(&items[n / 2..]),
    }
}

/// Ensemble average over `trajectories` noise realizations, with relaxation
/// on idle and laser segments.
pub fn apply_sequence_with_noise(
    seq: &PulseSequence,
    sys: &SpinSystem,
    rho0: &DensityMatrix<f64>,
    noise: &NoiseModel,
    trajectories: usize,
    seed: u64,
) -> Result<DensityMatrix<f64>> {
    apply_sequence_with_noise_opts(seq, sys, rho0, noise, trajectories, seed, &TrajectoryOptions::default())
}

pub fn apply_sequence_with_noise_opts(
    seq: &PulseSequence,
    sys: &SpinSystem,
    rho0: &DensityMatrix<f64>,
    noise: &NoiseModel,
    trajectories: usize,
    seed: u64,
    opts: &TrajectoryOptions<'_>,
) -> Result<DensityMatrix<f64>> {
    if trajectories == 0 {
        return Err(SpinLabError::Domain("at least one trajectory is required".into()));
    }
    seq.validate()?;
    noise.validate()?;
    sys.check_laser()?;
    let runs: Vec<Mat4<f64>> = (0..trajectories)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k as u64);
            run_trajectory(seq, sys, rho0, noise, &mut rng, opts).map(|r| *r.matrix())
        })
        .collect::<Result<_>>()?;
    let mean = pairwise_sum(&runs).scale_re(1.0 / trajectories as f64);
    Ok(DensityMatrix::from_matrix_unchecked(mean.hermitian_part()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_integral_is_exact_for_linear_data() {
        let d = SampledDetuning { t0: 1.0, h: 0.5, values: vec![0.0, 1.0, 2.0, 3.0] };
        // delta(t) = 2 (t - 1) on [1, 2.5]
        let exact = |a: f64, b: f64| (b - 1.0).powi(2) - (a - 1.0).powi(2);
        for (a, b) in [(1.0, 2.5), (1.2, 1.3), (1.1, 2.4)] {
            assert!((d.integral(a, b) - exact(a, b)).abs() < 1e-12);
        }
    }
}
