use std::f64::consts::PI;

use proptest::prelude::*;
use spinlab::pulse::{
    apply_sequence_with_noise, compile_gate, default_exact_step, propagate_exact, propagate_rwa, CompileOptions,
    DriveAmplitudes, DualToneCalibration, GateKind, GateSpec, PulseSegment, PulseSequence, SpinSystem, Tone,
};
use spinlab::{fidelity, noise::NoiseModel, Channel, DensityMatrix, SystemConfig, TransitionLabel};

fn sys() -> SpinSystem {
    SpinSystem::new(&SystemConfig::hbn_default()).unwrap()
}

fn compile(g: &str, s: &SpinSystem, mw_eff: f64, rf_eff: f64) -> PulseSequence {
    let drive = DriveAmplitudes::effective(&s.table, mw_eff, rf_eff);
    compile_gate(&GateSpec::parse(g).unwrap(), &s.table, &DualToneCalibration::default(), &drive, &CompileOptions::default())
        .unwrap()
}

// |dn_e up_n> is label 2, |up_e up_n> label 0.
#[test]
fn exact_mw1_pi_inverts_target_and_converges_in_dt() {
    let s = sys();
    let seq = compile("SEL_E(MW1,pi)", &s, 1.0, 0.8);
    let rho0 = DensityMatrix::basis_state(2);
    let dt = default_exact_step(&seq, &s);
    let runs: Vec<_> = [1.0, 2.0, 4.0].iter().map(|k| propagate_exact(&seq, &s, &rho0, dt / k).unwrap()).collect();
    assert!(runs[0].populations()[0] > 0.999, "{:?}", runs[0].populations());
    // midpoint stepping is second order: halving dt cuts the change fourfold
    let (d1, d2) = (runs[0].trace_distance(&runs[1]), runs[1].trace_distance(&runs[2]));
    assert!((d1 / d2 - 4.0).abs() < 0.5, "{d1:e} {d2:e}");
    assert!(d1 < 5e-3);
}

#[test]
fn empty_sequence_is_identity() {
    let s = sys();
    let rho = spinlab::bell_state::<f64>(spinlab::BellKind::PhiMinus);
    let seq = PulseSequence::new();
    assert_eq!(propagate_rwa(&seq, &s, &rho).unwrap(), rho);
    assert!(propagate_exact(&seq, &s, &rho, 1e-5).unwrap().trace_distance(&rho) < 1e-12);
}

#[test]
fn two_pi_rotation_restores_populations() {
    let s = sys();
    let seq = compile("SEL_E(MW1,2pi)", &s, 1.0, 0.8);
    for k in 0..4 {
        let out = propagate_rwa(&seq, &s, &DensityMatrix::basis_state(k)).unwrap();
        assert!((out.populations()[k] - 1.0).abs() < 1e-6, "state {k}");
    }
}

#[test]
fn swap_matches_permutation_oracle() {
    // CNOT_E (flip e if n up) then CNOT_N (flip n if e down) on basis labels
    // 0=uu 1=ud 2=du 3=dd: 0->2->3, 1->1->1, 2->0->0, 3->3->2.
    let oracle = [3usize, 1, 0, 2];
    let s = sys();
    let seq = compile("SWAP", &s, 5.0, 0.5);
    for k in 0..4 {
        let out = propagate_rwa(&seq, &s, &DensityMatrix::basis_state(k)).unwrap();
        let p = out.populations();
        assert!(p[oracle[k]] > 0.97, "input {k}: {p:?}");
    }
    // SWAP on product states: population of |dn_e up_n> moves to |up_e dn_n>
    let out = propagate_rwa(&seq, &s, &DensityMatrix::basis_state(2)).unwrap();
    assert!(out.populations()[0] > 0.97);
}

#[test]
fn synchronized_swap_is_nearly_exact() {
    let s = sys();
    let drive = DriveAmplitudes::effective(&s.table, 5.0, 0.8);
    let opts = CompileOptions { synchronize: true };
    let seq = compile_gate(&GateSpec::x(GateKind::Swap), &s.table, &Default::default(), &drive, &opts).unwrap();
    let oracle = [3usize, 1, 0, 2];
    for (k, &target) in oracle.iter().enumerate() {
        let out = propagate_rwa(&seq, &s, &DensityMatrix::basis_state(k)).unwrap();
        assert!(out.populations()[target] > 0.999, "input {k}: {:?}", out.populations());
    }
}

#[test]
fn exact_propagation_is_unitary() {
    let s = sys();
    let seq = compile("LOCAL_E_PI2:+y", &s, 4.0, 0.8);
    let rho = DensityMatrix::<f64>::from_matrix_unchecked(
        spinlab::spin::from_pauli(&[1.0, 0.1, 0.0, 0.3, 0.2, 0.0, 0.1, 0.0, -0.2, 0.1, 0.0, 0.0, 0.4, 0.0, 0.0, 0.1])
    );
    let out = propagate_exact(&seq, &s, &rho, default_exact_step(&seq, &s)).unwrap();
    assert!((out.matrix().trace().re - 1.0).abs() < 1e-8);
    let (a, b) = (rho.eigenvalues(), out.eigenvalues());
    for k in 0..4 {
        assert!((a[k] - b[k]).abs() < 1e-8);
    }
}

#[test]
fn mw1_pi_leaves_mw2_pair_alone() {
    let s = sys();
    let seq = compile("SEL_E(MW1,pi)", &s, 1.0, 0.8);
    let dt = default_exact_step(&seq, &s);
    for k in [1usize, 3] {
        let out = propagate_exact(&seq, &s, &DensityMatrix::basis_state(k), dt).unwrap();
        assert!((out.populations()[k] - 1.0).abs() < 1e-3, "{k}: {:?}", out.populations());
    }
}

#[test]
fn rabi_trace_of_exact_path_follows_cos_squared() {
    let s = sys();
    let tr = *s.table.get(TransitionLabel::Mw2);
    let amp = 2.0;
    let omega = tr.enhancement() * amp;
    for dur in [0.05, 0.13, 0.21] {
        let seg = PulseSegment::drive(Channel::Mw, vec![Tone { frequency: tr.frequency, amplitude: amp, phase: 0.3 }], dur, "");
        let seq = PulseSequence::from_segments(vec![seg]);
        let out = propagate_exact(&seq, &s, &DensityMatrix::basis_state(tr.down), default_exact_step(&seq, &s)).unwrap();
        let want = (PI * omega * dur).sin().powi(2);
        assert!((out.populations()[tr.up] - want).abs() < 2e-3, "{dur}");
    }
}

#[test]
fn zero_noise_equals_noiseless_propagation() {
    let s = sys();
    let seq = compile("LOCAL_E_PI2", &s, 5.0, 0.8).then(&PulseSequence::from_segments(vec![PulseSegment::idle(0.2)]));
    let rho0 = DensityMatrix::basis_state(3);
    let clean = propagate_rwa(&seq, &s, &rho0).unwrap();
    let noisy = apply_sequence_with_noise(&seq, &s, &rho0, &NoiseModel::noiseless(), 3, 7).unwrap();
    assert!(clean.trace_distance(&noisy) < 1e-12);
}

#[test]
fn noisy_average_is_reproducible_bit_for_bit() {
    let s = sys();
    let seq = compile("LOCAL_E_PI2", &s, 20.0, 0.8).then(&PulseSequence::from_segments(vec![PulseSegment::idle(0.05)]));
    let rho0 = DensityMatrix::basis_state(3);
    let m = NoiseModel::default();
    let a = apply_sequence_with_noise(&seq, &s, &rho0, &m, 64, 11).unwrap();
    let b = apply_sequence_with_noise(&seq, &s, &rho0, &m, 64, 11).unwrap();
    assert_eq!(a.matrix(), b.matrix());
    let c = apply_sequence_with_noise(&seq, &s, &rho0, &m, 64, 12).unwrap();
    assert_ne!(a.matrix(), c.matrix());
}

fn random_gate() -> impl Strategy<Value = (String, f64, f64)> {
    let kinds = prop_oneof![
        Just("CNOT_E".to_string()),
        Just("CNOT_N".to_string()),
        Just("LOCAL_E_PI2".to_string()),
        Just("LOCAL_E_PI".to_string()),
        (prop_oneof![Just("MW1"), Just("MW2")], 0.2f64..=2.0).prop_map(|(l, a)| format!("SEL_E({l},{})", a * PI)),
        (prop_oneof![Just("RF1"), Just("RF2")], 0.2f64..=2.0).prop_map(|(l, a)| format!("SEL_N({l},{})", a * PI)),
    ];
    let axis = prop_oneof![Just("+x"), Just("-x"), Just("+y"), Just("-y")];
    (kinds, axis, 0.5f64..=5.0, 0.2f64..=1.0).prop_map(|(k, a, mw, rf)| (format!("{k}:{a}"), mw, rf))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn rwa_and_exact_agree((gate, mw, rf) in random_gate(), k in 0usize..4) {
        let s = sys();
        let seq = compile(&gate, &s, mw, rf);
        // a superposition input exercises phases as well as populations
        let psi0 = DensityMatrix::<f64>::basis_state(k);
        let prep = compile("LOCAL_E_PI2:+y", &s, 5.0, 0.8);
        let rho0 = propagate_rwa(&prep, &s, &psi0).unwrap();
        let a = propagate_rwa(&seq, &s, &rho0).unwrap();
        let b = propagate_exact(&seq, &s, &rho0, default_exact_step(&seq, &s)).unwrap();
        let f = fidelity(&a, &b).unwrap();
        prop_assert!(f * f >= 0.999, "{gate} mw={mw} rf={rf}: F={f}");
    }
}
