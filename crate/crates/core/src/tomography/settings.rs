use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SpinLabError};
use crate::linalg::Mat4;
use crate::noise::{sample_counts, NoiseModel, ReadoutModel};
use crate::pulse::{
    apply_sequence_with_noise, compile_program, rwa_unitary, CompileOptions, DriveAmplitudes, DualToneCalibration,
    GateKind, GateSpec, AxisPhase, PulseSequence, SpinSystem,
};
use crate::spin::{pauli_expectations, DensityMatrix, TransitionLabel};

pub const PAULI_NAMES: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// One binary measurement: a pre-rotation followed by electron readout.
#[derive(Clone, Debug)]
pub struct MeasurementSetting {
    /// Electron then nuclear Pauli label, e.g. `XZ`.
    pub label: String,
    pub pre_rotation: PulseSequence,
    /// Which c-NOT carries nuclear information to the electron, if any.
    pub mapping_note: &'static str,
    /// Operator `E` with `P(electron up) = Tr(E rho)`, from the compiled pulses.
    pub povm: Mat4<f64>,
}

fn rotation(pauli: usize, nuclear: bool) -> Vec<GateSpec> {
    // pi/2 about -y takes X to Z; about +x takes Y to Z
    let axis = match pauli {
        1 => AxisPhase::MinusY,
        2 => AxisPhase::PlusX,
        _ => return vec![],
    };
    let half = std::f64::consts::FRAC_PI_2;
    if nuclear {
        // both RF lines: the same rotation in either electron manifold
        vec![
            GateSpec::new(GateKind::SelN(TransitionLabel::Rf1, half), axis),
            GateSpec::new(GateKind::SelN(TransitionLabel::Rf2, half), axis),
        ]
    } else {
        vec![GateSpec::new(GateKind::LocalEPi2, axis)]
    }
}

/// Gate list for `<sigma_e (x) sigma_n>`.
fn program(e: usize, n: usize) -> (Vec<GateSpec>, &'static str) {
    let mut gates = rotation(e, false);
    gates.extend(rotation(n, true));
    let note = match (e, n) {
        (0, 0) => {
            // electron flip: measures (I - Z)/2, fixing the trace direction
            gates.push(GateSpec::x(GateKind::LocalEPi));
            "none"
        }
        (_, 0) => "none",
        (0, _) => {
            // n -> n xor e, then e -> not n: electron reads nuclear Z
            gates.push(GateSpec::x(GateKind::CnotN));
            gates.push(GateSpec::x(GateKind::CnotE));
            "CNOT_N then CNOT_E: nuclear Z copied onto the electron"
        }
        _ => {
            gates.push(GateSpec::x(GateKind::CnotE));
            "CNOT_E: two-qubit parity mapped onto the electron"
        }
    };
    (gates, note)
}

/// The 16 Pauli-product settings, ordered `4 e + n` with 0..4 = I, X, Y, Z.
pub fn measurement_settings(
    sys: &SpinSystem,
    calib: &DualToneCalibration,
    drive: &DriveAmplitudes,
    opts: &CompileOptions,
) -> Result<Vec<MeasurementSetting>> {
    let mut up = Mat4::zeros();
    up.m[0][0].re = 1.0;
    up.m[1][1].re = 1.0;
    let mut out = Vec::with_capacity(16);
    for e in 0..4 {
        for n in 0..4 {
            let (gates, mapping_note) = program(e, n);
            let pre_rotation = compile_program(&gates, &sys.table, calib, drive, opts)?;
            let u = rwa_unitary(&pre_rotation, sys, 0.0)?;
            let povm = up.conjugate_by(&u.adjoint()).hermitian_part();
            let label = format!("{}{}", PAULI_NAMES[e], PAULI_NAMES[n]);
            out.push(MeasurementSetting { label, pre_rotation, mapping_note, povm });
        }
    }
    let rank = gram_rank(&out);
    if rank < 16 {
        return Err(SpinLabError::Tomography(format!("measurement set has rank {rank}, need 16")));
    }
    Ok(out)
}

/// `A[k][m] = Tr(E_k sigma_m) / 4`, so that `p_k = sum_m A[k][m] c_m`.
pub fn measurement_matrix(povms: &[Mat4<f64>]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(povms.len(), 16);
    for (k, e) in povms.iter().enumerate() {
        let c = pauli_expectations(&DensityMatrix::from_matrix_unchecked(*e));
        for m in 0..16 {
            a[(k, m)] = 0.25 * c[m];
        }
    }
    a
}

/// Rank of the Gram matrix of the measurement operators.
pub fn gram_rank(settings: &[MeasurementSetting]) -> usize {
    let povms: Vec<_> = settings.iter().map(|s| s.povm).collect();
    let a = measurement_matrix(&povms);
    let gram = &a * a.transpose();
    let sv = gram.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

/// Counts for every setting. `counts_*` hold expected values when `exact`.
#[derive(Clone, Debug)]
pub struct TomogramData {
    pub labels: Vec<String>,
    pub povms: Vec<Mat4<f64>>,
    pub shots: u64,
    pub counts_signal: Vec<f64>,
    pub counts_reference: Vec<f64>,
    pub exact: bool,
}

impl TomogramData {
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if n != 16 || self.povms.len() != n || self.counts_signal.len() != n || self.counts_reference.len() != n {
            return Err(SpinLabError::Tomography("data must cover all 16 settings".into()));
        }
        if self.shots == 0 {
            return Err(SpinLabError::Tomography("shots must be positive".into()));
        }
        if self.counts_signal.iter().chain(&self.counts_reference).any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(SpinLabError::Tomography("counts must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Electron-up population estimate per setting.
    pub fn populations(&self, readout: &ReadoutModel<f64>) -> Vec<f64> {
        self.counts_signal.iter().zip(&self.counts_reference).map(|(&s, &r)| readout.estimate(s, r)).collect()
    }
}

/// How shot noise enters the simulated data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shots {
    /// Poisson totals over this many repetitions per setting.
    Finite(u64),
    /// Expected counts, as if infinitely many shots were averaged (normalized to `n`).
    Infinite,
}

/// Optional noise on the pre-rotation pulses themselves.
#[derive(Clone, Copy, Debug)]
pub struct NoisyPulses<'a> {
    pub model: &'a NoiseModel,
    pub trajectories: usize,
}

/// Propagates `rho` through every pre-rotation and samples the readout.
pub fn simulate_tomography(
    rho: &DensityMatrix<f64>,
    settings: &[MeasurementSetting],
    sys: &SpinSystem,
    readout: &ReadoutModel<f64>,
    shots: Shots,
    seed: u64,
    noise: Option<NoisyPulses<'_>>,
) -> Result<TomogramData> {
    rho.check()?;
    let n_shots = match shots {
        Shots::Finite(n) if n > 0 => n,
        Shots::Finite(_) => return Err(SpinLabError::Tomography("shots must be positive".into())),
        Shots::Infinite => 1_000_000,
    };
    let mut data = TomogramData {
        labels: settings.iter().map(|s| s.label.clone()).collect(),
        povms: settings.iter().map(|s| s.povm).collect(),
        shots: n_shots,
        counts_signal: Vec::with_capacity(settings.len()),
        counts_reference: Vec::with_capacity(settings.len()),
        exact: shots == Shots::Infinite,
    };
    for (k, s) in settings.iter().enumerate() {
        let p = match noise {
            None => s.povm.inner(rho.matrix()).re,
            Some(nz) => {
                apply_sequence_with_noise(&s.pre_rotation, sys, rho, nz.model, nz.trajectories, seed ^ ((k as u64) << 32))?
                    .electron_up()
            }
        };
        let p = p.clamp(0.0, 1.0);
        match shots {
            Shots::Infinite => {
                data.counts_signal.push(n_shots as f64 * readout.mean_counts(p));
                data.counts_reference.push(n_shots as f64 * readout.counts_bright);
            }
            Shots::Finite(_) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let r = sample_counts(p, readout, n_shots, &mut rng);
                data.counts_signal.push(r.counts_signal as f64);
                data.counts_reference.push(r.counts_reference as f64);
            }
        }
    }
    Ok(data)
}
