use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use spinlab::noise::{cpmg_t2_analytic, ExperimentRecord, NoiseModel};
use spinlab::protocols::*;
use spinlab::pulse::TransferModel;
use spinlab::tomography::Shots;
use spinlab::{BellKind, SpinLabError, TransitionLabel};

fn lab() -> Lab {
    Lab::hbn_default().unwrap()
}

fn dft_magnitude(x: &[f64], y: &[f64], f: f64) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let (re, im) = x.iter().zip(y).fold((0.0, 0.0), |(re, im), (&t, &v)| {
        (re + (v - m) * (TAU * f * t).cos(), im - (v - m) * (TAU * f * t).sin())
    });
    (re * re + im * im).sqrt() * 2.0 / y.len() as f64
}

#[test]
fn odmr_peaks_sit_on_both_mw_lines() {
    let lab = lab().noiseless();
    let t = &lab.system.table;
    let (f1, f2) = (t.get(TransitionLabel::Mw1).frequency, t.get(TransitionLabel::Mw2).frequency);
    let spec = OdmrSpec { start_mhz: 1850.0, stop_mhz: 2300.0, points: 901, rabi_mhz: 2.0, duration: None, shots: 10_000 };
    let rec = run_odmr(&lab, &spec, 5).unwrap();
    let p = rec.column("expected").unwrap();
    let argmax = |lo: f64, hi: f64| {
        (0..rec.x.len()).filter(|&k| rec.x[k] > lo && rec.x[k] < hi).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap()
    };
    let (a, b) = (argmax(1850.0, 2050.0), argmax(2050.0, 2300.0));
    // the nucleus is mixed, so each line holds half the population
    assert!((p[a] - 0.5).abs() < 0.02 && (p[b] - 0.5).abs() < 0.02, "{} {}", p[a], p[b]);
    assert!((rec.x[a] - f1).abs() <= 0.5 && (rec.x[b] - f2).abs() <= 0.5);
    assert!((rec.x[b] - rec.x[a] - t.mw_splitting()).abs() <= 1.0);
}

#[test]
fn odmr_span_without_lines_is_flat() {
    let lab = lab();
    let spec = OdmrSpec { start_mhz: 2400.0, stop_mhz: 2500.0, points: 41, rabi_mhz: 5.0, duration: None, shots: 20_000 };
    let rec = run_odmr(&lab, &spec, 2).unwrap();
    assert!(rec.column("expected").unwrap().iter().all(|p| p.abs() < 1e-3));
    // population estimate per point: sd ~ sqrt(2 / (shots * bright)) / contrast
    let sd = (2.0 / (20_000.0 * 10.0f64)).sqrt() / 0.3;
    let mean = rec.population.iter().sum::<f64>() / 41.0;
    assert!(mean.abs() < 4.0 * sd / 41f64.sqrt(), "{mean}");
    assert!(rec.population.iter().all(|p| p.abs() < 5.0 * sd));
}

#[test]
fn odmr_depth_grows_with_drive_until_saturation() {
    let lab = lab();
    let f1 = lab.system.table.get(TransitionLabel::Mw1).frequency;
    let depth: Vec<f64> = [0.25, 1.0, 4.0]
        .iter()
        .map(|&rabi| {
            let spec = OdmrSpec { start_mhz: f1, stop_mhz: f1 + 1e-3, points: 2, rabi_mhz: rabi, duration: Some(2.0), shots: 1 };
            run_odmr(&lab, &spec, 9).unwrap().column("expected").unwrap()[0]
        })
        .collect();
    assert!(depth[0] < depth[1] && depth[1] < depth[2], "{depth:?}");
    // half the nuclear population is on MW1, which saturates at 1/2
    assert!((depth[2] - 0.25).abs() < 0.05, "{depth:?}");
}

#[test]
fn electron_rabi_follows_cos_squared_at_the_configured_rate() {
    let lab = lab().noiseless();
    let spec = RabiSpec { target: RabiTarget::Line(TransitionLabel::Mw1), max_duration: 1.0, points: 101, amplitude: None, shots: 100_000 };
    let rec = run_rabi(&lab, &spec, 4).unwrap();
    for (t, p) in rec.x.iter().zip(rec.column("expected").unwrap()) {
        assert!((p - (PI * 5.0 * t).sin().powi(2)).abs() < 2e-3, "t={t}: {p}");
    }
    let fit = fit_rabi(&rec).unwrap();
    assert!((fit.value("frequency") - 5.0).abs() < 0.02, "{fit}");
}

#[test]
fn nuclear_rabi_runs_at_0p8_mhz_through_the_enhanced_matrix_element() {
    let lab = lab().noiseless();
    let spec = RabiSpec { target: RabiTarget::Line(TransitionLabel::Rf1), max_duration: 5.0, points: 101, amplitude: None, shots: 100_000 };
    let rec = run_rabi(&lab, &spec, 4).unwrap();
    let p = rec.column("expected").unwrap();
    assert!(p.iter().copied().fold(0.0, f64::max) > 0.98);
    let fit = fit_rabi(&rec).unwrap();
    assert!((fit.value("frequency") - 0.8).abs() < 0.016, "{fit}");
    // the bare amplitude is ~100x smaller than the Rabi rate it produces
    assert!(lab.drive.rf < 0.8 / 50.0);
}

#[test]
fn uncalibrated_dual_tone_drive_beats_at_both_tone_rates() {
    let mut lab = lab().noiseless();
    let t = &lab.system.table;
    let (f1, f2) = (t.get(TransitionLabel::Mw1).frequency, t.get(TransitionLabel::Mw2).frequency);
    lab.system = lab.system.clone().with_transfer(TransferModel::two_point(f1, 1.0, f2, 0.7));
    lab.calibration = spinlab::pulse::calibrate_dual_tone(&lab.system, &lab.drive).unwrap();
    let run = |calibrated| {
        let spec = RabiSpec {
            target: RabiTarget::LocalDualTone { calibrated },
            max_duration: 4.0,
            points: 401,
            amplitude: None,
            shots: 1,
        };
        run_rabi(&lab, &spec, 1).unwrap()
    };
    let beat = run(false);
    let y = beat.column("expected").unwrap();
    let (a5, a35, gap) = (dft_magnitude(&beat.x, y, 5.0), dft_magnitude(&beat.x, y, 3.5), dft_magnitude(&beat.x, y, 4.25));
    assert!(a5 > 0.2 && a35 > 0.2 && gap < 0.05, "{a5} {a35} {gap}");
    // the calibrated pair collapses onto one line
    let flat = run(true);
    let y = flat.column("expected").unwrap();
    assert!(dft_magnitude(&flat.x, y, 5.0) > 0.45 && dft_magnitude(&flat.x, y, 3.5) < 0.05);
}

fn hahn_spec(n: usize, t_max: f64, points: usize) -> CpmgSpec {
    let tau = (1..=points).map(|k| k as f64 * t_max / (2.0 * n as f64 * points as f64)).collect();
    CpmgSpec { rabi_mhz: None, shots: 1_000_000, ..CpmgSpec::new(n, tau) }
}

#[test]
fn hahn_echo_decays_at_148_ns() {
    let rec = run_cpmg(&lab(), &hahn_spec(1, 0.4, 40), 3).unwrap();
    let fit = spinlab::fit::fit_stretched_exponential_fixed_offset(&rec.x, rec.column("coherence").unwrap(), 0.0).unwrap();
    assert!((0.133..=0.163).contains(&fit.value("t2")), "{fit}");
}

#[test]
fn noiseless_cpmg_stays_at_full_coherence() {
    let lab = lab().noiseless();
    for engine in [CpmgEngine::Analytic, CpmgEngine::MonteCarlo] {
        let spec = CpmgSpec { engine, ..CpmgSpec::new(4, vec![0.0, 0.02, 0.2, 1.0]) };
        let rec = run_cpmg(&lab, &spec, 1).unwrap();
        assert!(rec.column("expected").unwrap().iter().all(|c| (c - 1.0).abs() < 1e-9), "{engine:?}");
    }
}

#[test]
fn monte_carlo_tracks_the_finite_pulse_filter_at_small_n() {
    let lab = Lab { trajectories: 1000, ..lab() };
    for n in [1usize, 4] {
        let t2 = cpmg_t2_analytic(n, &lab.noise).unwrap();
        let tau: Vec<f64> = [0.4, 0.8, 1.2].iter().map(|f| f * t2 / (2.0 * n as f64)).collect();
        let a = run_cpmg(&lab, &CpmgSpec::new(n, tau.clone()), 1).unwrap();
        let m = run_cpmg(&lab, &CpmgSpec { engine: CpmgEngine::MonteCarlo, ..CpmgSpec::new(n, tau) }, 1).unwrap();
        for (x, y) in a.column("expected").unwrap().iter().zip(m.column("expected").unwrap()) {
            assert!((x - y).abs() < 0.03, "N={n}: analytic {x} vs MC {y}");
        }
    }
}

#[test]
fn monte_carlo_without_finite_pulses_is_a_config_error() {
    let spec = CpmgSpec { engine: CpmgEngine::MonteCarlo, rabi_mhz: None, ..CpmgSpec::new(1, vec![0.1]) };
    assert!(matches!(run_cpmg(&lab(), &spec, 1), Err(SpinLabError::Config { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn echo_cancels_static_detuning(n in 1usize..=64, tau in 0.001f64..0.5, delta in 0.1f64..20.0) {
        let base = lab();
        // quasi-static noise: tau_c far beyond the sequence, sigma unchanged
        let slow = base.with_noise(NoiseModel { ou_tau_c: 1e7, ..base.noise.without_relaxation() });
        let rec = run_cpmg(&slow, &CpmgSpec { rabi_mhz: None, ..CpmgSpec::new(n, vec![tau]) }, 1).unwrap();
        let c = rec.column("expected").unwrap()[0];
        prop_assert!((c - 1.0).abs() < 1e-6, "noise: {}", c);
        // a deterministic offset: a field far too slow to change during the sequence
        let clean = base.noiseless();
        let field = AcFieldSpec { f_ac: 1e-9, amplitude_ut: delta / 0.028_025, phase: AcPhase::Fixed(0.0) };
        let spec = CpmgSpec { rabi_mhz: None, field: Some(field), ..CpmgSpec::new(n, vec![tau]) };
        let c = run_cpmg(&clean, &spec, 1).unwrap().column("expected").unwrap()[0];
        prop_assert!((c - 1.0).abs() < 1e-6, "offset: {}", c);
    }
}

fn synthetic_ladder(beta: f64) -> Vec<(usize, ExperimentRecord)> {
    [1usize, 4, 16, 64, 256, 1024]
        .iter()
        .map(|&n| {
            let t2 = 0.148 * (n as f64).powf(beta);
            let mut rec = ExperimentRecord::new("cpmg", "total_time", "us", 1);
            let mut c = Vec::new();
            for k in 1..=40 {
                let t = k as f64 * 3.0 * t2 / 40.0;
                rec.push(t, 0, 0, 0.0);
                c.push((-(t / t2).powi(3)).exp());
            }
            rec.extra.push(("coherence".into(), c));
            (n, rec)
        })
        .collect()
}

#[test]
fn t2_scaling_recovers_a_synthetic_exponent() {
    let s = extract_t2_scaling(&synthetic_ladder(2.0 / 3.0)).unwrap();
    assert!((s.beta - 2.0 / 3.0).abs() < 0.02, "{}", s.beta);
    assert_eq!(s.per_n.len(), 6);
}

#[test]
fn t2_scaling_flags_missing_decay_and_short_ladders() {
    let mut flat = synthetic_ladder(0.7);
    for (_, rec) in &mut flat {
        rec.extra[0].1.iter_mut().for_each(|c| *c = 1.0);
    }
    assert!(matches!(extract_t2_scaling(&flat), Err(SpinLabError::Fit(_))));
    let short = synthetic_ladder(0.7).into_iter().take(3).collect::<Vec<_>>();
    assert!(matches!(extract_t2_scaling(&short), Err(SpinLabError::Fit(_))));

    // shot-noise-only records from a noiseless lab
    let lab = lab().noiseless();
    let recs: Vec<_> = [1usize, 2, 4, 8]
        .iter()
        .map(|&n| (n, run_cpmg(&lab, &CpmgSpec { shots: 100_000, ..hahn_spec(n, 1.0, 20) }, n as u64).unwrap()))
        .collect();
    let err = extract_t2_scaling(&recs).unwrap_err();
    assert!(matches!(err, SpinLabError::Fit(_)), "{err}");
}

#[test]
fn noiseless_bell_states_are_prepared_and_reconstructed() {
    let lab = lab();
    for kind in BellKind::ALL {
        let spec = BellSpec { kind, shots: Shots::Infinite, noisy: false, noisy_tomography: false };
        let r = run_bell_protocol(&lab, &spec, 1).unwrap();
        assert!(r.fidelity >= 0.999, "{kind:?}: {}", r.fidelity);
        let c = r.reconstructed.matrix();
        match kind {
            BellKind::PsiMinus => assert!(c.m[0][3].re < -0.49, "{:?}", c.m[0][3]),
            BellKind::PsiPlus => assert!(c.m[0][3].re > 0.49),
            BellKind::PhiPlus => assert!(c.m[1][2].re > 0.49),
            BellKind::PhiMinus => assert!(c.m[1][2].re < -0.49),
        }
    }
}

#[test]
fn noiseless_bell_protocol_is_seed_independent() {
    let lab = lab();
    let spec = BellSpec { kind: BellKind::PsiPlus, shots: Shots::Infinite, noisy: false, noisy_tomography: false };
    let a = run_bell_protocol(&lab, &spec, 1).unwrap();
    let b = run_bell_protocol(&lab, &spec, 987_654).unwrap();
    assert_eq!(a.reconstructed.matrix(), b.reconstructed.matrix());
    assert_eq!(a.prepared.matrix(), b.prepared.matrix());
}

fn ac_spec(rabi: Option<f64>, amplitude_ut: f64, step: f64, t_max: f64) -> CpmgSpec {
    let tau: Vec<f64> = (1..).map(|k| k as f64 * step).take_while(|&t| t <= t_max + 1e-12).collect();
    let field = AcFieldSpec { f_ac: 15.0, amplitude_ut, phase: AcPhase::Fixed(0.0) };
    CpmgSpec { rabi_mhz: rabi, field: Some(field), ..CpmgSpec::new(4, tau) }
}

#[test]
fn ideal_ac_dips_sit_at_odd_quarter_periods() {
    let lab = lab().noiseless();
    // the dip sits at k / (4 f) up to an O(1/N^2) pull from the T-linear
    // envelope (0.5 ns at N = 4), so use a longer train; phase stays below pi
    let spec = CpmgSpec { n_pulses: 16, ..ac_spec(None, 10.0, 1e-4, 0.06) };
    let rec = run_ac_field_scan(&lab, &spec, 1).unwrap();
    let c = rec.column("expected").unwrap();
    let f = spec.field.unwrap();
    assert!((f.resonant_tau(1) - 1.0 / 60.0).abs() < 1e-15);
    for k in [1usize, 3] {
        let want = f.resonant_tau(k);
        let got = find_dip(&rec.x, c, want - 0.005, want + 0.005).unwrap();
        assert!((got - want).abs() < 1e-4, "k={k}: {got} vs {want}");
    }
}

#[test]
fn finite_pulses_shift_the_dips_and_both_engines_agree() {
    let lab = lab().noiseless();
    let analytic = ac_spec(Some(25.0), 120.0, 5e-4, 0.05);
    let mc = CpmgSpec { engine: CpmgEngine::MonteCarlo, ..analytic.clone() };
    let a = run_ac_field_scan(&lab, &analytic, 1).unwrap();
    let m = run_ac_field_scan(&lab, &mc, 1).unwrap();
    for k in [1usize, 3] {
        // t_pi = 20 ns moves the dip earlier by about t_pi / 2
        let shifted = k as f64 / 60.0 - 0.01;
        let da = find_dip(&a.x, a.column("expected").unwrap(), shifted - 0.006, shifted + 0.006).unwrap();
        let dm = find_dip(&m.x, m.column("expected").unwrap(), shifted - 0.006, shifted + 0.006).unwrap();
        assert!((da - dm).abs() < 5e-4, "k={k}: analytic {da} MC {dm}");
        assert!((dm - shifted).abs() < 3e-3, "k={k}: {dm} vs {shifted}");
    }
}

#[test]
fn analytic_field_response_tracks_pulse_level_dynamics_at_any_phase() {
    // in the quadrature where the z-phase cancels, only the transverse
    // component acting during the pi pulses dephases
    let lab = lab().noiseless();
    for (tau, theta) in [(0.0078, 0.0), (0.0078, 1.2), (0.038, 2.0), (0.038, 4.0)] {
        let field = AcFieldSpec { f_ac: 15.0, amplitude_ut: 40.0, phase: AcPhase::Fixed(theta) };
        let spec = CpmgSpec { rabi_mhz: Some(25.0), field: Some(field), ..CpmgSpec::new(4, vec![tau]) };
        let a = run_ac_field_scan(&lab, &spec, 1).unwrap().column("expected").unwrap()[0];
        let mc = CpmgSpec { engine: CpmgEngine::MonteCarlo, ..spec };
        let m = run_ac_field_scan(&lab, &mc, 1).unwrap().column("expected").unwrap()[0];
        assert!((a - m).abs() < 0.01, "tau={tau} theta={theta}: analytic {a} vs pulses {m}");
    }
}

#[test]
fn zero_amplitude_field_leaves_no_dip() {
    let lab = lab().noiseless();
    for engine in [CpmgEngine::Analytic, CpmgEngine::MonteCarlo] {
        let spec = CpmgSpec { engine, ..ac_spec(Some(25.0), 0.0, 2e-3, 0.05) };
        let rec = run_ac_field_scan(&lab, &spec, 1).unwrap();
        assert!(rec.column("expected").unwrap().iter().all(|c| (c - 1.0).abs() < 1e-9));
    }
}

#[test]
fn correlation_axis_steps_by_whole_periods_plus_the_offset() {
    let t = correlation_axis(15.0, 1.0, 101.0, 101, 0.1).unwrap();
    let step = t[1] - t[0];
    let cycles = step * 15.0;
    assert!((cycles - cycles.floor() - 0.1).abs() < 1e-9, "{cycles}");
    assert!(t.windows(2).all(|w| (w[1] - w[0] - step).abs() < 1e-9));
    // an alias of 0.1 cycles per step unfolds back to 15 MHz
    assert!((unfold_alias(0.1 / step, step, 15.0) - 15.0).abs() < 1e-9);
    assert!((unfold_alias(0.1 / step, step, 15.02) - 15.0).abs() < 1e-9);
    assert!(correlation_axis(15.0, 1.0, 101.0, 101, 0.6).is_err());
}

fn correlation_spec(lab: &Lab, tau_scale: f64, memory: bool, points: usize, offset: f64) -> CorrelationSpec {
    let field = AcFieldSpec { f_ac: 15.0, amplitude_ut: 33.0, phase: AcPhase::RandomPerShot };
    let mut spec = CorrelationSpec {
        field,
        n_pulses: 8,
        tau: tau_scale * (1.0 / 60.0 - 0.005),
        rabi_mhz: 50.0,
        memory,
        t_axis: vec![],
        shots: 10_000,
        phase_samples: 300,
        sampling_reference: 15.0,
    };
    let start = spec.min_separation(lab).unwrap();
    spec.t_axis = correlation_axis(15.0, start, start + points as f64 * 0.2, points, offset).unwrap();
    spec
}

#[test]
fn phase_averaged_correlation_matches_the_closed_form() {
    let lab = lab().noiseless();
    let mut spec = correlation_spec(&lab, 1.0, false, 8, 0.0);
    let start = spec.t_axis[0];
    spec.t_axis = (0..8).map(|k| start + k as f64 / 60.0).collect();
    let r = run_correlation(&lab, &spec, 3).unwrap();
    assert!((r.phi0 - 1.0).abs() < 0.1, "phi0 {}", r.phi0);
    for (k, &t) in r.t_axis.iter().enumerate() {
        let want = correlation_closed_form(r.phi0, 15.0, t, f64::INFINITY);
        assert!((r.expected[k] - want).abs() < 0.03, "T={t}: {} vs {want}", r.expected[k]);
        assert!((r.p_values[k] - want).abs() < 5.0 / (spec.shots as f64).sqrt());
    }
    // small-phase limit at zero separation
    let small = correlation_closed_form(0.05, 15.0, 0.0, f64::INFINITY);
    assert!((small - 0.5 * (1.0 - 0.05f64.powi(2) / 2.0)).abs() < 1e-6);
}

#[test]
fn memory_run_reproduces_the_direct_signal_without_noise() {
    let lab = lab().noiseless();
    let mut spec = correlation_spec(&lab, 1.0, true, 4, 0.0);
    let start = spec.t_axis[0];
    spec.t_axis = (0..4).map(|k| start + k as f64 / 60.0).collect();
    let r = run_correlation(&lab, &spec, 5).unwrap();
    for (k, &t) in r.t_axis.iter().enumerate() {
        let want = correlation_closed_form(r.phi0, 15.0, t, f64::INFINITY);
        assert!((r.expected[k] - want).abs() < 0.03, "T={t}: {} vs {want}", r.expected[k]);
    }
}

#[test]
fn correlation_frequency_does_not_need_exact_tau_tuning() {
    let lab = lab().noiseless();
    for scale in [0.9, 1.1] {
        let spec = correlation_spec(&lab, scale, false, 64, 0.1);
        let r = run_correlation(&lab, &spec, 11).unwrap();
        let span = r.t_axis[r.t_axis.len() - 1] - r.t_axis[0];
        assert!((r.frequency_estimate - 15.0).abs() < 1.0 / span, "tau x{scale}: {}", r.frequency_estimate);
        assert!(r.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn correlation_rejects_separations_inside_the_first_block() {
    let lab = lab().noiseless();
    let mut spec = correlation_spec(&lab, 1.0, true, 4, 0.0);
    spec.t_axis = vec![0.1, 0.2, 0.3, 0.4];
    assert!(matches!(run_correlation(&lab, &spec, 1), Err(SpinLabError::Config { .. })));
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let lab = Lab { trajectories: 64, ..lab() };
    let spec = CpmgSpec { engine: CpmgEngine::MonteCarlo, ..CpmgSpec::new(2, vec![0.02, 0.05, 0.08]) };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_cpmg(&lab, &spec, 77).unwrap().to_csv().unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn manifest_lists_fit_parameters() {
    let mut m = RunManifest::new("rabi", "electron Rabi oscillation", "abc", 7);
    let rec = run_rabi(
        &lab().noiseless(),
        &RabiSpec { target: RabiTarget::Line(TransitionLabel::Mw1), max_duration: 1.0, points: 41, amplitude: None, shots: 10_000 },
        7,
    )
    .unwrap();
    m.push_fit("fit", &fit_rabi(&rec).unwrap());
    let text = m.to_text();
    assert!(text.starts_with("protocol = rabi\n"));
    assert!(text.contains("seed = 7\n") && text.contains("fit.frequency = ") && text.contains("fit.frequency_sigma = "));
}
