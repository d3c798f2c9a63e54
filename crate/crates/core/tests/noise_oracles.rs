use std::f64::consts::TAU;

use num_complex::Complex;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinlab::fit::fit_power_law;
use spinlab::linalg::Mat4;
use spinlab::noise::{
    cpmg_coherence_analytic, cpmg_sensitivity, cpmg_t2_analytic, decoherence_functional, free_decay,
    relaxation_channel, sample_counts, sample_ou, NoiseModel, PulseTimes, ReadoutModel, SpectrumShape,
};
use spinlab::{DensityMatrix, SpinLabError};

fn model(shape: SpectrumShape, sigma: f64, tau_c: f64) -> NoiseModel {
    NoiseModel { ou_sigma: sigma, ou_tau_c: tau_c, shape, ..NoiseModel::default() }
}

fn mean_and_variance(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

fn autocovariance(v: &[f64], lag: usize) -> f64 {
    let (m, _) = mean_and_variance(v);
    let n = v.len() - lag;
    (0..n).map(|k| (v[k] - m) * (v[k + lag] - m)).sum::<f64>() / n as f64
}

#[test]
fn ou_samples_have_stationary_variance_and_exponential_acf() {
    let m = model(SpectrumShape::Lorentzian, 2.0, 0.5);
    let dt: f64 = 0.5 / 10.5;
    // average a few independent 1e5-step records to keep the estimate tight
    let (mut var, mut acf) = (0.0, 0.0);
    let lag = (0.5 / dt).round() as usize;
    for seed in 0..4 {
        let v = sample_ou(&m, 1e5 * dt, dt, seed).unwrap();
        assert_eq!(v.len(), 100_001);
        var += mean_and_variance(&v).1 / 4.0;
        acf += autocovariance(&v, lag) / 4.0;
    }
    assert!((var / 4.0 - 1.0).abs() < 0.03, "variance {var}");
    let want = 4.0 * (-(lag as f64 * dt) / 0.5).exp();
    assert!((acf / want - 1.0).abs() < 0.05, "acf {acf} vs {want}");
}

#[test]
fn cascaded_samples_match_their_correlation_function() {
    let m = model(SpectrumShape::LorentzianSquared, 1.5, 0.2);
    let dt = 0.2 / 12.0;
    let lag = 12;
    let (mut var, mut acf) = (0.0, 0.0);
    for seed in 0..4 {
        let v = sample_ou(&m, 1e5 * dt, dt, 100 + seed).unwrap();
        var += mean_and_variance(&v).1 / 4.0;
        acf += autocovariance(&v, lag) / 4.0;
    }
    assert!((var / m.correlation(0.0) - 1.0).abs() < 0.03, "variance {var}");
    // C(tc) = 2 sigma^2 / e
    let want = m.correlation(lag as f64 * dt);
    assert!((want - 2.0 * 2.25 / std::f64::consts::E).abs() < 1e-12);
    assert!((acf / want - 1.0).abs() < 0.05, "acf {acf} vs {want}");
}

#[test]
fn zero_sigma_samples_are_zero_and_coarse_steps_fail() {
    let m = model(SpectrumShape::Lorentzian, 0.0, 0.1);
    assert!(sample_ou(&m, 1.0, 0.005, 1).unwrap().iter().all(|&x| x == 0.0));
    assert!(matches!(sample_ou(&m, 1.0, 0.02, 1), Err(SpinLabError::StepSize { .. })));
}

/// `chi = (2 pi)^2 / 2 * int int y(t) y(t') C(t - t')` by a midpoint double sum.
fn chi_time_domain(y: &dyn Fn(f64) -> f64, total: f64, m: &NoiseModel, n: usize) -> f64 {
    let h = total / n as f64;
    let ys: Vec<f64> = (0..n).map(|k| y((k as f64 + 0.5) * h)).collect();
    // C(t - t') depends on the index difference only
    let c: Vec<f64> = (0..n).map(|d| m.correlation(d as f64 * h)).collect();
    let mut acc = 0.0;
    for i in 0..n {
        acc += ys[i] * ys[i] * c[0];
        for j in 0..i {
            acc += 2.0 * ys[i] * ys[j] * c[i - j];
        }
    }
    0.5 * TAU * TAU * acc * h * h
}

fn cpmg_switching(n: usize, total: f64) -> impl Fn(f64) -> f64 {
    move |t| {
        // pulses at (j - 1/2) T / n
        let flips = ((t / total * n as f64) + 0.5).floor() as i64;
        if flips % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[test]
fn filter_quadrature_matches_time_domain_double_integral() {
    for shape in [SpectrumShape::Lorentzian, SpectrumShape::LorentzianSquared] {
        let m = model(shape, 3.0, 0.08);
        for (n, total) in [(1usize, 0.15), (4, 0.4), (16, 0.9)] {
            let quad = decoherence_functional(&PulseTimes::Cpmg(n), total, &m).unwrap();
            let brute = chi_time_domain(&cpmg_switching(n, total), total, &m, 4000);
            assert!((quad / brute - 1.0).abs() < 2e-3, "{shape:?} n={n}: {quad} vs {brute}");
        }
    }
}

#[test]
fn explicit_pulse_times_reproduce_the_cpmg_closed_form() {
    let m = NoiseModel::default();
    let total = 0.6;
    let times: Vec<f64> = (1..=8).map(|j| (j as f64 - 0.5) * total / 8.0).collect();
    let a = decoherence_functional(&PulseTimes::Cpmg(8), total, &m).unwrap();
    let b = decoherence_functional(&PulseTimes::Explicit(times), total, &m).unwrap();
    assert!((a / b - 1.0).abs() < 1e-6);
}

#[test]
fn finite_pulse_sensitivity_matches_time_domain_oracle() {
    let m = NoiseModel::default();
    let (n, tau, t2, t1) = (4usize, 0.03, 0.01, 0.02);
    let (pieces, total) = cpmg_sensitivity(n, tau, t2, t1);
    assert!((total - (2.0 * t2 + n as f64 * (2.0 * tau + t1))).abs() < 1e-12);
    // y(t) written out directly from the pulse schedule
    let y = move |t: f64| {
        use std::f64::consts::FRAC_PI_2;
        if t < t2 {
            return (FRAC_PI_2 * t / t2).sin();
        }
        let mut s = t - t2;
        let mut sign = 1.0;
        for _ in 0..n {
            if s < tau {
                return sign;
            }
            s -= tau;
            if s < t1 {
                return sign * (std::f64::consts::PI * s / t1).cos();
            }
            s -= t1;
            sign = -sign;
            if s < tau {
                return sign;
            }
            s -= tau;
        }
        sign * (FRAC_PI_2 * s / t2).cos()
    };
    let quad = decoherence_functional(&pieces, total, &m).unwrap();
    let brute = chi_time_domain(&y, total, &m, 4000);
    assert!((quad / brute - 1.0).abs() < 2e-3, "{quad} vs {brute}");
}

#[test]
fn free_induction_decay_matches_empty_filter() {
    for shape in [SpectrumShape::Lorentzian, SpectrumShape::LorentzianSquared] {
        let m = model(shape, 4.0, 0.1);
        for t in [0.02, 0.07, 0.3] {
            let chi = decoherence_functional(&PulseTimes::Explicit(vec![]), t, &m).unwrap();
            assert!(((-chi).exp() - free_decay(&m, t)).abs() < 1e-6, "{shape:?} t={t}");
        }
    }
}

#[test]
fn default_calibration_reproduces_the_coherence_targets() {
    let m = NoiseModel::default();
    let hahn = cpmg_t2_analytic(1, &m).unwrap();
    let long = cpmg_t2_analytic(1024, &m).unwrap();
    // frozen from the calibration run
    assert!((hahn - 0.148).abs() < 5e-4, "{hahn}");
    assert!((long - 32.76).abs() < 0.05, "{long}");
    assert!((0.133..=0.163).contains(&hahn) && (28.0..=48.0).contains(&long));
}

#[test]
fn lorentzian_t2_scales_as_n_to_two_thirds_for_slow_noise() {
    let m = model(SpectrumShape::Lorentzian, 1.0, 50.0);
    let ns: Vec<f64> = (0..=10).map(|k| (1u32 << k) as f64).collect();
    let t2: Vec<f64> = ns.iter().map(|&n| cpmg_t2_analytic(n as usize, &m).unwrap()).collect();
    let beta = fit_power_law(&ns, &t2).unwrap().value("beta");
    assert!((beta - 2.0 / 3.0).abs() < 0.03, "beta {beta}");
}

#[test]
fn many_pulses_at_fixed_length_narrow_away_the_decay() {
    let m = NoiseModel::default();
    let total = 1.0;
    let c: Vec<f64> = [1usize, 16, 256, 4096]
        .iter()
        .map(|&n| cpmg_coherence_analytic(n, total / (2.0 * n as f64), &m).unwrap())
        .collect();
    assert!(c.windows(2).all(|w| w[1] > w[0]), "{c:?}");
    assert!(c[3] > 0.999, "{c:?}");
    assert_eq!(cpmg_coherence_analytic(8, 0.1, &NoiseModel::noiseless()).unwrap(), 1.0);
}

#[test]
fn readout_estimator_is_unbiased_and_shrinks_with_shots() {
    let r = ReadoutModel::default();
    let p = 0.37;
    let spread = |shots: u64| -> (f64, f64) {
        let est: Vec<f64> = (0..1000)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sample_counts(p, &r, shots, &mut rng).population_estimate
            })
            .collect();
        let (m, v) = mean_and_variance(&est);
        (m, v.sqrt())
    };
    let (m1, s1) = spread(100);
    let (m2, s2) = spread(10_000);
    assert!((m1 - p).abs() < 3.0 * s1 / 1000f64.sqrt(), "{m1} +- {s1}");
    assert!((m2 - p).abs() < 3.0 * s2 / 1000f64.sqrt(), "{m2} +- {s2}");
    // 100x the shots -> 10x smaller spread
    assert!((s1 / s2 / 10.0 - 1.0).abs() < 0.1, "{s1} {s2}");
}

#[test]
fn readout_estimate_is_invariant_to_brightness_scaling() {
    let r = ReadoutModel { counts_bright: 10.0, contrast: 0.3 };
    let (s, ref_) = (7_400u64, 10_000u64);
    let a = r.estimate(s as f64, ref_ as f64);
    let b = r.estimate(2.0 * s as f64, 2.0 * ref_ as f64);
    assert!((a - b).abs() < 1e-15);
}

fn random_state(seed: &[f64; 32]) -> DensityMatrix<f64> {
    let a = Mat4::from_fn(|i, j| Complex::new(seed[4 * i + j], seed[16 + 4 * i + j]));
    let m = a * a.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_matrix_unchecked(m.scale_re(1.0 / tr))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relaxation_is_a_trace_preserving_positive_semigroup(
        seed in prop::array::uniform32(-1.0f64..1.0),
        t in 0.0f64..500.0,
        s in 0.0f64..500.0,
    ) {
        let rho = random_state(&seed);
        let m = NoiseModel::default();
        let once = relaxation_channel(&rho, t + s, &m);
        let twice = relaxation_channel(&relaxation_channel(&rho, t, &m), s, &m);
        prop_assert!((*once.matrix() - *twice.matrix()).max_abs() < 1e-12);
        prop_assert!((once.matrix().trace().re - 1.0).abs() < 1e-12);
        prop_assert!(once.eigenvalues().iter().all(|&l| l > -1e-12));
    }
}

#[test]
fn tail_integral_matches_quadrature_for_fast_and_slow_noise() {
    for shape in [SpectrumShape::Lorentzian, SpectrumShape::LorentzianSquared] {
        for (tau_c, w) in [(0.08, 5.0), (1.0, 9.0), (1.0, 11.0), (1e7, 300.0)] {
            let m = model(shape, 5.0, tau_c);
            // substitute x = w / s, s in (0, 1]: int_0^1 S(w / s) / w ds
            let n = 200_000;
            let h = 1.0 / n as f64;
            let direct: f64 = (0..n).map(|k| {
                let s = (k as f64 + 0.5) * h;
                m.spectral_density(w / s) / w * h
            }).sum();
            let closed = m.tail_integral(w);
            assert!(closed > 0.0, "{shape:?} tau_c={tau_c}: {closed}");
            assert!((closed - direct).abs() <= 1e-6 * direct, "{shape:?} tau_c={tau_c} w={w}: {closed} vs {direct}");
        }
    }
}
