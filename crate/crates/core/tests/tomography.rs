use num_complex::Complex;
use proptest::prelude::*;
use spinlab::linalg::Mat4;
use spinlab::noise::ReadoutModel;
use spinlab::pulse::{CompileOptions, DriveAmplitudes, DualToneCalibration, SpinSystem};
use spinlab::tomography::{
    estimate_from, format_density_matrix, linear_inversion, log_likelihood, measurement_settings,
    mle_reconstruct, parse_density_matrix, project_to_physical, pseudo_pure_decomposition, pseudo_pure_fidelity,
    simulate_tomography, MeasurementSetting, Shots, TomogramData,
};
use spinlab::{bell_state, fidelity, pauli_expectations, BellKind, DensityMatrix, SystemConfig};

fn setup() -> (SpinSystem, Vec<MeasurementSetting>) {
    let sys = SpinSystem::new(&SystemConfig::hbn_default()).unwrap();
    let drive = DriveAmplitudes::effective(&sys.table, 5.0, 0.8);
    let settings =
        measurement_settings(&sys, &DualToneCalibration::default(), &drive, &CompileOptions { synchronize: true })
            .unwrap();
    (sys, settings)
}

fn acquire(rho: &DensityMatrix<f64>, shots: Shots, seed: u64) -> TomogramData {
    let (sys, settings) = setup();
    simulate_tomography(rho, &settings, &sys, &ReadoutModel::default(), shots, seed, None).unwrap()
}

fn random_state(seed: &[f64; 32]) -> DensityMatrix<f64> {
    let a = Mat4::from_fn(|i, j| Complex::new(seed[4 * i + j], seed[16 + 4 * i + j]));
    let m = a * a.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_matrix_unchecked(m.scale_re(1.0 / tr))
}

fn mixed_with(target: &DensityMatrix<f64>, eps: f64) -> DensityMatrix<f64> {
    let m = target.matrix().scale_re(eps) + DensityMatrix::<f64>::maximally_mixed().matrix().scale_re(1.0 - eps);
    DensityMatrix::from_matrix_unchecked(m)
}

#[test]
fn settings_have_expected_structure_and_full_rank() {
    let (_, settings) = setup();
    assert_eq!(settings.len(), 16);
    let zi = settings.iter().find(|s| s.label == "ZI").unwrap();
    assert!(zi.pre_rotation.segments.is_empty());
    let xi = settings.iter().find(|s| s.label == "XI").unwrap();
    assert_eq!(xi.pre_rotation.segments.len(), 1);
    assert!(xi.pre_rotation.segments[0].label.contains("-y"), "{}", xi.pre_rotation.segments[0].label);
    assert_eq!(spinlab::tomography::gram_rank(&settings), 16);
    // every POVM element is a valid effect operator
    for s in &settings {
        let eig = spinlab::linalg::eigh(&s.povm).values;
        assert!(eig.iter().all(|&l| (-1e-9..=1.0 + 1e-9).contains(&l)), "{}: {eig:?}", s.label);
    }
}

#[test]
fn infinite_shot_linear_inversion_is_exact() {
    let seeds = [[0.3, -0.7, 0.2, 0.9, -0.1, 0.5, 0.4, -0.3, 0.8, 0.1, -0.6, 0.2, 0.0, 0.7, -0.4, 0.3,
                 0.5, 0.2, -0.9, 0.1, 0.3, -0.2, 0.6, 0.4, -0.1, 0.8, 0.2, -0.5, 0.7, 0.0, 0.1, -0.3]];
    let states = [bell_state(BellKind::PsiPlus), bell_state(BellKind::PhiMinus), random_state(&seeds[0])];
    for rho in &states {
        let est = linear_inversion(&acquire(rho, Shots::Infinite, 0), &ReadoutModel::default()).unwrap();
        assert!((est.matrix - *rho.matrix()).max_abs() < 1e-10);
        assert!(est.is_physical() || est.min_eigenvalue > -1e-10);
    }
}

#[test]
fn finite_shot_correlators_are_bell_like_within_three_sigma() {
    let readout = ReadoutModel::default();
    let shots = 10_000u64;
    // per-setting population error from Poisson counts, propagated through the contrast
    let n_b: f64 = shots as f64 * readout.counts_bright;
    let sigma_p = (n_b + n_b).sqrt() / (n_b * readout.contrast);
    let est = linear_inversion(&acquire(&bell_state(BellKind::PsiPlus), Shots::Finite(shots), 3), &readout).unwrap();
    let zz = est.correlators[15];
    // parity setting: c = 2p - 1, so sigma_c = 2 sigma_p
    assert!((zz - 1.0).abs() < 3.0 * 2.0 * sigma_p, "ZZ {zz} (sigma {})", 2.0 * sigma_p);
    assert!((est.matrix.trace().re - 1.0).abs() < 1e-12);
    assert!(est.matrix.hermiticity_error() < 1e-12);

    let mixed = linear_inversion(&acquire(&DensityMatrix::maximally_mixed(), Shots::Finite(shots), 4), &readout).unwrap();
    for (m, c) in mixed.correlators.iter().enumerate().skip(1) {
        assert!(c.abs() < 3.0 * 2.0 * sigma_p * 1.5, "correlator {m}: {c}");
    }
}

#[test]
fn corrupted_correlator_is_flagged_not_rejected() {
    let mut c = pauli_expectations(&bell_state::<f64>(BellKind::PsiPlus));
    c[5] = 1.3;
    let est = estimate_from(c);
    assert!(!est.is_physical());
    assert!(est.min_eigenvalue < 0.0);
    assert!((est.matrix.trace().re - 1.0).abs() < 1e-12);
}

#[test]
fn mle_reaches_high_fidelity_at_1e5_shots() {
    let target = bell_state(BellKind::PsiPlus);
    let readout = ReadoutModel::default();
    let mut mean = 0.0;
    for seed in 0..5 {
        let rho = mle_reconstruct(&acquire(&target, Shots::Finite(100_000), seed), &readout).unwrap();
        mean += fidelity(&rho, &target).unwrap() / 5.0;
    }
    assert!(mean >= 0.99, "mean fidelity {mean}");
}

#[test]
fn mle_of_mixed_state_is_nearly_flat() {
    let rho = mle_reconstruct(&acquire(&DensityMatrix::maximally_mixed(), Shots::Finite(100_000), 9), &ReadoutModel::default())
        .unwrap();
    for l in rho.eigenvalues() {
        assert!((l - 0.25).abs() < 0.02, "{:?}", rho.eigenvalues());
    }
}

#[test]
fn mle_round_trip_at_infinite_statistics() {
    let target = mixed_with(&bell_state(BellKind::PhiPlus), 0.8);
    let rho = mle_reconstruct(&acquire(&target, Shots::Infinite, 0), &ReadoutModel::default()).unwrap();
    assert!(rho.trace_distance(&target) < 1e-6, "{}", rho.trace_distance(&target));
}

#[test]
fn mle_beats_projected_linear_inversion() {
    let readout = ReadoutModel::default();
    for seed in 0..6 {
        let data = acquire(&bell_state(BellKind::PsiMinus), Shots::Finite(2_000), 20 + seed);
        let mle = mle_reconstruct(&data, &readout).unwrap();
        let proj = project_to_physical(&linear_inversion(&data, &readout).unwrap().matrix);
        assert!(log_likelihood(&data, &readout, &mle) >= log_likelihood(&data, &readout, &proj) - 1e-9, "seed {seed}");
    }
}

#[test]
fn correlators_are_invariant_to_brightness_doubling() {
    let rho = bell_state(BellKind::PhiMinus);
    let (sys, settings) = setup();
    let dim = ReadoutModel { counts_bright: 10.0, contrast: 0.3 };
    let bright = ReadoutModel { counts_bright: 20.0, contrast: 0.3 };
    let a = simulate_tomography(&rho, &settings, &sys, &dim, Shots::Infinite, 0, None).unwrap();
    let b = simulate_tomography(&rho, &settings, &sys, &bright, Shots::Infinite, 0, None).unwrap();
    let ca = linear_inversion(&a, &dim).unwrap().correlators;
    let cb = linear_inversion(&b, &bright).unwrap().correlators;
    for m in 0..16 {
        assert!((ca[m] - cb[m]).abs() < 1e-12);
    }
}

#[test]
fn round_trip_fidelity_improves_with_shots() {
    let target = bell_state(BellKind::PsiPlus);
    let readout = ReadoutModel::default();
    let mean = |shots: u64| -> f64 {
        (0..50u64)
            .map(|seed| {
                let rho = mle_reconstruct(&acquire(&target, Shots::Finite(shots), 500 + seed), &readout).unwrap();
                fidelity(&rho, &target).unwrap()
            })
            .sum::<f64>()
            / 50.0
    };
    let f: Vec<f64> = [300u64, 3_000, 30_000].iter().map(|&n| mean(n)).collect();
    assert!(f[0] < f[1] && f[1] < f[2], "{f:?}");
}

#[test]
fn pseudo_pure_examples() {
    let psi = bell_state(BellKind::PsiPlus);
    let pp = pseudo_pure_decomposition(&psi).unwrap();
    assert!((pp.epsilon - 1.0).abs() < 1e-12);
    assert!((pseudo_pure_fidelity(&psi, &psi).unwrap() - 1.0).abs() < 1e-9);

    let half = mixed_with(&psi, 0.5);
    let pp = pseudo_pure_decomposition(&half).unwrap();
    assert!((pp.epsilon - 0.5).abs() < 1e-12);
    assert!(pp.state.trace_distance(&psi) < 1e-9);
    assert!((pseudo_pure_fidelity(&half, &psi).unwrap() - 1.0).abs() < 1e-9);

    assert!(pseudo_pure_decomposition(&DensityMatrix::maximally_mixed()).is_err());
}

#[test]
fn density_matrix_text_round_trips() {
    let rho = mixed_with(&bell_state(BellKind::PhiMinus), 0.7);
    let text = format_density_matrix(&rho);
    assert!(text.contains("# real") && text.contains("# imag"));
    let back = parse_density_matrix(&text).unwrap();
    assert!((back - *rho.matrix()).max_abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pseudo_pure_epsilon_matches_scan_oracle(seed in prop::array::uniform32(-1.0f64..1.0)) {
        // mix towards identity so that a pseudo-pure part exists with margin
        let rho = mixed_with(&random_state(&seed), 0.6);
        let pp = pseudo_pure_decomposition(&rho).unwrap();
        // smallest eps on a fine grid whose rho_pp stays positive
        let grid = 20_000;
        let scan = (1..=grid)
            .map(|k| k as f64 / grid as f64)
            .find(|&eps| {
                let m = (*rho.matrix() - DensityMatrix::<f64>::maximally_mixed().matrix().scale_re(1.0 - eps)).scale_re(1.0 / eps);
                DensityMatrix::from_matrix_unchecked(m).eigenvalues()[0] >= -1e-12
            })
            .unwrap();
        prop_assert!((pp.epsilon - scan).abs() <= 1.0 / grid as f64 + 1e-12, "{} vs {scan}", pp.epsilon);
        prop_assert!(pp.state.eigenvalues()[0].abs() < 1e-9);
    }

    #[test]
    fn mle_output_is_physical_on_adversarial_counts(
        frac in prop::collection::vec(0.0f64..1.5, 16),
        shots in 1u64..5_000,
    ) {
        // signal counts anywhere from zero to well above the reference
        let (_, settings) = setup();
        let readout = ReadoutModel::default();
        let r: f64 = shots as f64 * readout.counts_bright;
        let data = TomogramData {
            labels: settings.iter().map(|s| s.label.clone()).collect(),
            povms: settings.iter().map(|s| s.povm).collect(),
            shots,
            counts_signal: frac.iter().map(|f| (f * r).round()).collect(),
            counts_reference: vec![r; 16],
            exact: false,
        };
        let rho = mle_reconstruct(&data, &readout).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(rho.matrix().hermiticity_error() < 1e-12);
        prop_assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
        prop_assert!(rho.eigenvalues()[0] > -1e-12);
    }
}
