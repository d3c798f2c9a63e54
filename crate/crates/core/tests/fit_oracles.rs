use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spinlab::fit::{
    fit_damped_cosine, fit_power_law, fit_stretched_exponential, spectrum_and_linewidth, STRETCH_BOUNDS,
};

fn grid(n: usize, step: f64) -> Vec<f64> {
    (0..n).map(|k| k as f64 * step).collect()
}

fn damped(a: f64, f: f64, phi: f64, tau: f64, c: f64) -> impl Fn(f64) -> f64 {
    move |t| a * (TAU * f * t + phi).cos() * (-t / tau).exp() + c
}

#[test]
fn exact_damped_cosine_is_recovered() {
    let x = grid(120, 0.05);
    let m = damped(0.4, 1.7, 0.9, 3.0, 0.5);
    let y: Vec<f64> = x.iter().map(|&t| m(t)).collect();
    let r = fit_damped_cosine(&x, &y, None).unwrap();
    assert!(r.converged);
    for (name, want) in [("amplitude", 0.4), ("frequency", 1.7), ("phase", 0.9), ("tau", 3.0), ("offset", 0.5)] {
        assert!((r.value(name) - want).abs() < 1e-8, "{name}: {}", r.value(name));
    }
}

#[test]
fn constant_data_is_a_fit_error() {
    let x = grid(20, 0.1);
    assert!(fit_damped_cosine(&x, &[0.3; 20], None).is_err());
    assert!(fit_stretched_exponential(&x, &[0.3; 20]).is_err());
}

#[test]
fn frequency_one_sigma_interval_is_calibrated_at_snr_10() {
    let x = grid(100, 0.02);
    let m = damped(1.0, 2.3, 0.4, 1.5, 0.0);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = x.iter().map(|&t| m(t) + noise.sample(&mut rng)).collect();
        let r = fit_damped_cosine(&x, &y, None).unwrap();
        if (r.value("frequency") - 2.3).abs() <= r.sigma("frequency") {
            hits += 1;
        }
    }
    // a calibrated 1-sigma interval covers 68%; binomial 3-sigma band over 100 seeds
    assert!((54..=82).contains(&hits), "{hits}/100 inside 1 sigma");
}

#[test]
fn frequency_two_sigma_coverage_exceeds_90_percent() {
    let x = grid(100, 0.02);
    let m = damped(1.0, 2.3, 0.4, 1.5, 0.0);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let hits = (0..100)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let y: Vec<f64> = x.iter().map(|&t| m(t) + noise.sample(&mut rng)).collect();
            let r = fit_damped_cosine(&x, &y, None).unwrap();
            (r.value("frequency") - 2.3).abs() <= 2.0 * r.sigma("frequency")
        })
        .count();
    assert!(hits >= 90, "{hits}/100");
}

#[test]
fn stretched_exponential_recovers_hahn_shape() {
    let x = grid(60, 0.01);
    let y: Vec<f64> = x.iter().map(|&t| 0.45 * (-(t / 0.148f64).powi(3)).exp() + 0.05).collect();
    let r = fit_stretched_exponential(&x, &y).unwrap();
    assert!((r.value("t2") - 0.148).abs() < 1e-6);
    assert!((r.value("exponent") - 3.0).abs() < 1e-6);
    assert!(r.at_bound.is_empty());
}

#[test]
fn stretch_exponent_at_bound_is_flagged() {
    // a much sharper edge than n = 4 can produce
    let x = grid(60, 0.02);
    let y: Vec<f64> = x.iter().map(|&t| (-(t / 0.6f64).powi(9)).exp()).collect();
    let r = fit_stretched_exponential(&x, &y).unwrap();
    assert!((r.value("exponent") - STRETCH_BOUNDS.1).abs() < 1e-9);
    assert_eq!(r.at_bound, vec!["exponent"]);
}

#[test]
fn power_law_is_exact_with_ols_standard_error() {
    let n = [1.0, 4.0, 16.0, 64.0, 256.0, 1024.0];
    let t: Vec<f64> = n.iter().map(|v: &f64| 0.148 * v.powf(0.77)).collect();
    let r = fit_power_law(&n, &t).unwrap();
    assert!((r.value("beta") - 0.77).abs() < 1e-12);
    assert!(r.sigma("beta") < 1e-10);

    // perturbed ladder: compare against the closed-form OLS slope error
    let wiggle = [0.1, -0.05, 0.08, -0.12, 0.02, 0.04];
    let t: Vec<f64> = t.iter().zip(wiggle).map(|(v, w)| v * f64::exp(w)).collect();
    let r = fit_power_law(&n, &t).unwrap();
    let lx: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / 6.0;
    let my = ly.iter().sum::<f64>() / 6.0;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let b = lx.iter().zip(&ly).map(|(a, c)| (a - mx) * (c - my)).sum::<f64>() / sxx;
    let a = my - b * mx;
    let s2 = lx.iter().zip(&ly).map(|(x, y)| (y - a - b * x).powi(2)).sum::<f64>() / 4.0;
    assert!((r.value("beta") - b).abs() < 1e-12);
    assert!((r.sigma("beta") - (s2 / sxx).sqrt()).abs() < 1e-12);
}

#[test]
fn hann_linewidth_of_a_pure_tone_is_1p44_over_t() {
    // T_max = 1000 us, 0.2 MHz tone
    let t = grid(2001, 0.5);
    let p: Vec<f64> = t.iter().map(|&x| 0.5 - 0.3 * (TAU * 0.2 * x).cos()).collect();
    let s = spectrum_and_linewidth(&t, &p).unwrap();
    assert!((s.peak_frequency - 0.2).abs() < 1e-5);
    let want = 1.44 / 1000.0;
    assert!((s.fwhm / want - 1.0).abs() < 0.03, "fwhm {} vs {want}", s.fwhm);
}

#[test]
fn white_noise_has_no_five_sigma_peak() {
    let noise = Normal::new(0.0, 1.0).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = grid(512, 1.0);
        let p: Vec<f64> = t.iter().map(|_| noise.sample(&mut rng)).collect();
        let s = spectrum_and_linewidth(&t, &p).unwrap();
        assert!(s.peak_significance < 5.0, "seed {seed}: {}", s.peak_significance);
    }
}

#[test]
fn non_uniform_axis_is_a_sampling_error() {
    let t = [0.0, 1.0, 2.5, 3.0, 4.0];
    assert!(spectrum_and_linewidth(&t, &[0.0; 5]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn damped_cosine_fit_is_translation_covariant(shift in -5.0f64..5.0, f in 0.5f64..3.0, phi in 0.0f64..6.0) {
        let x = grid(80, 0.03);
        let m = damped(0.7, f, phi, 2.0, 0.1);
        let y: Vec<f64> = x.iter().map(|&t| m(t)).collect();
        let xs: Vec<f64> = x.iter().map(|t| t + shift).collect();
        let a = fit_damped_cosine(&x, &y, None).unwrap();
        let b = fit_damped_cosine(&xs, &y, None).unwrap();
        prop_assert!((a.value("frequency") - b.value("frequency")).abs() < 1e-7);
        prop_assert!((a.value("tau") - b.value("tau")).abs() < 1e-6);
        prop_assert!((a.value("offset") - b.value("offset")).abs() < 1e-7);
        // the phase referred to x = 0 absorbs the shift
        let dphi = (b.value("phase") - a.value("phase") + TAU * f * shift).rem_euclid(TAU);
        prop_assert!(dphi.min(TAU - dphi) < 1e-6);
    }

    #[test]
    fn stretched_fit_scales_t2_with_the_time_axis(scale in 0.2f64..3.0) {
        // rescaling x rescales T2 and nothing else
        let x = grid(50, 0.02);
        let y: Vec<f64> = x.iter().map(|&t| 0.8 * (-(t / 0.3f64).powf(1.7)).exp() + 0.1).collect();
        let xs: Vec<f64> = x.iter().map(|t| t * scale).collect();
        let a = fit_stretched_exponential(&x, &y).unwrap();
        let b = fit_stretched_exponential(&xs, &y).unwrap();
        prop_assert!((b.value("t2") / a.value("t2") - scale).abs() < 1e-6);
        prop_assert!((a.value("exponent") - b.value("exponent")).abs() < 1e-6);
    }
}
