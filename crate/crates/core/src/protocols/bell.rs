use std::f64::consts::{FRAC_PI_2, PI};

use super::Lab;
use crate::error::Result;
use crate::pulse::{AxisPhase, GateKind, GateSpec, LaserMode, PulseSegment, PulseSequence, TrajectoryOptions};
use crate::spin::{bell_state, fidelity, BellKind, DensityMatrix, TransitionLabel};
use crate::tomography::{
    measurement_settings, mle_reconstruct, simulate_tomography, NoisyPulses, Shots, TomogramData,
};

/// Length of each optical reset, us.
const LASER_US: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BellSpec {
    pub kind: BellKind,
    pub shots: Shots,
    /// Dephasing and relaxation during the preparation.
    pub noisy: bool,
    /// Also apply the noise to the tomography pre-rotations.
    pub noisy_tomography: bool,
}

#[derive(Clone, Debug)]
pub struct BellResult {
    pub data: TomogramData,
    /// Ensemble state after preparation, before tomography.
    pub prepared: DensityMatrix<f64>,
    pub reconstructed: DensityMatrix<f64>,
    /// Of the reconstruction with respect to the ideal Bell state.
    pub fidelity: f64,
    pub prepared_fidelity: f64,
}

/// Laser init, SWAP (polarizes the nucleus), laser init, nuclear pi/2 on
/// RF1, electron pi on MW1 (the `Psi` pair) or MW2 (the `Phi` pair). The
/// electron pulse phase picks the sign of the superposition.
pub fn bell_sequence(lab: &Lab, kind: BellKind) -> Result<PulseSequence> {
    let (line, axis) = match kind {
        BellKind::PsiPlus => (TransitionLabel::Mw1, AxisPhase::MinusY),
        BellKind::PsiMinus => (TransitionLabel::Mw1, AxisPhase::PlusY),
        BellKind::PhiPlus => (TransitionLabel::Mw2, AxisPhase::MinusY),
        BellKind::PhiMinus => (TransitionLabel::Mw2, AxisPhase::PlusY),
    };
    let laser = PulseSequence::from_segments(vec![PulseSegment::laser(LaserMode::Init, LASER_US)]);
    let swap = lab.compile(&[GateSpec::x(GateKind::Swap)])?;
    let entangle = lab.compile(&[
        GateSpec::new(GateKind::SelN(TransitionLabel::Rf1, FRAC_PI_2), AxisPhase::PlusY),
        GateSpec::new(GateKind::SelE(line, PI), axis),
    ])?;
    Ok(laser.clone().then(&swap).then(&laser).then(&entangle))
}

/// Prepares the state from the maximally mixed start, runs the 16-setting
/// tomography and reconstructs by maximum likelihood.
pub fn run_bell_protocol(lab: &Lab, spec: &BellSpec, seed: u64) -> Result<BellResult> {
    let seq = bell_sequence(lab, spec.kind)?;
    let rho0 = DensityMatrix::maximally_mixed();
    let prep_lab = if spec.noisy { lab.clone() } else { lab.noiseless() };
    let prepared = prep_lab.ensemble(&seq, &rho0, super::derive_seed(seed, "bell", 0), &TrajectoryOptions::default())?;

    let settings = measurement_settings(&lab.system, &lab.calibration, &lab.drive, &lab.compile)?;
    let noise = (spec.noisy && spec.noisy_tomography)
        .then_some(NoisyPulses { model: &lab.noise, trajectories: lab.effective_trajectories() });
    let data = simulate_tomography(
        &prepared,
        &settings,
        &lab.system,
        &lab.readout,
        spec.shots,
        super::derive_seed(seed, "tomography", 0),
        noise,
    )?;
    let reconstructed = mle_reconstruct(&data, &lab.readout)?;
    let target = bell_state(spec.kind);
    Ok(BellResult {
        fidelity: fidelity(&reconstructed, &target)?,
        prepared_fidelity: fidelity(&prepared, &target)?,
        data,
        prepared,
        reconstructed,
    })
}
