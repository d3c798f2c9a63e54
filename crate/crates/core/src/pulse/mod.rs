//! Gate compilation and state propagation through timed pulse sequences.

mod calibrate;
mod exact;
mod gates;
mod noisy;
mod rwa;
mod sequence;
mod system;

pub use calibrate::calibrate_dual_tone;
pub use exact::{default_exact_step, max_frequency, propagate_exact, propagate_exact_with};
pub use gates::{
    compile_gate, compile_program, AxisPhase, CompileOptions, DriveAmplitudes, DualToneCalibration, GateKind, GateSpec,
};
pub use noisy::{
    apply_sequence_with_noise, apply_sequence_with_noise_opts, pairwise_sum, run_trajectory, trajectory_rng,
    SampledDetuning, TrajectoryOptions, LONG_IDLE_TAU_C,
};
pub use rwa::{
    propagate_rwa, propagate_rwa_with, rwa_unitary, Combined, Detuning, RwaOptions, RESONANCE_WINDOW_MHZ,
};
pub use sequence::{LaserMode, PulseSegment, PulseSequence, SegmentKind, Tone};
pub use system::{LaserModel, SpinSystem, TransferModel};

/// Sinusoidal longitudinal field on the electron, `delta(t) = A cos(2 pi f t + theta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcDetuning {
    /// Peak detuning in MHz (`gamma_e B_ac`).
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Detuning for AcDetuning {
    fn integral(&self, t0: f64, t1: f64) -> f64 {
        let w = std::f64::consts::TAU * self.frequency;
        self.amplitude / w * ((w * t1 + self.phase).sin() - (w * t0 + self.phase).sin())
    }

    fn max_step(&self) -> f64 {
        1.0 / (40.0 * self.frequency)
    }
}

/// No detuning; useful as a placeholder.
pub struct NoDetuning;

impl Detuning for NoDetuning {
    fn integral(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn max_step(&self) -> f64 {
        f64::INFINITY
    }
}
