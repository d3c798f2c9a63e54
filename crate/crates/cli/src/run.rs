//! Protocol dispatch: turns a validated [`RunConfig`] into artifact files.

use spinlab::fit::{fit_power_law, fit_stretched_exponential_fixed_offset, FitResult};
use spinlab::noise::{cpmg_t2_analytic, ExperimentRecord};
use spinlab::protocols::{
    ac_scan_exact, correlation_axis, derive_seed, extract_t2_scaling, find_dip, fit_rabi, linspace, run_ac_field_scan,
    run_bell_protocol, run_correlation, run_cpmg, run_odmr, run_rabi, AcFieldSpec, AcPhase, BellSpec, CorrelationSpec,
    CpmgEngine, CpmgSpec, Lab, OdmrSpec, RabiSpec, RabiTarget, RunManifest,
};
use spinlab::spin::{bell_state, fidelity, DensityMatrix};
use spinlab::tomography::{
    format_density_matrix, linear_inversion, measurement_settings, mle_reconstruct, pseudo_pure_fidelity,
    simulate_tomography, Shots, TomogramData,
};
use spinlab::linalg::Mat4;
use spinlab::{BellKind, SpinLabError, TransitionLabel};

use crate::config::{Engine, RunConfig};
use crate::error::CliError;
use crate::plot::{line_plot, Series};

/// Files to write, in order, plus a human-readable summary.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub summary: Vec<String>,
}

impl Artifacts {
    fn csv(&mut self, cfg: &RunConfig, stem: &str, record: &ExperimentRecord) -> Result<(), CliError> {
        self.files.push((format!("{stem}.csv"), config_header(cfg) + &record.to_csv()?));
        Ok(())
    }

    fn manifest(&mut self, stem: &str, m: &RunManifest) {
        self.files.push((format!("{stem}.manifest.txt"), m.to_text()));
    }

    fn plot(&mut self, stem: &str, title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> Result<(), CliError> {
        let svg = line_plot(title, x_label, y_label, series).map_err(|e| SpinLabError::Numeric(format!("plot: {e}")))?;
        self.files.push((format!("{stem}.svg"), svg));
        Ok(())
    }

    fn say(&mut self, line: String) {
        self.summary.push(line);
    }
}

/// The effective configuration as `#` comment lines.
fn config_header(cfg: &RunConfig) -> String {
    let mut s = format!("# config_hash = {}\n", cfg.hash());
    for line in cfg.canonical().lines().filter(|l| !l.trim().is_empty() && !l.starts_with("output_dir")) {
        s.push_str("# config: ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

fn manifest(cfg: &RunConfig, protocol: &str, reproduces: &str) -> RunManifest {
    RunManifest::new(protocol, reproduces, &cfg.hash(), cfg.seed)
}

fn push_fit(m: &mut RunManifest, a: &mut Artifacts, prefix: &str, fit: &spinlab::Result<FitResult>) {
    match fit {
        Ok(f) => m.push_fit(prefix, f),
        Err(e) => {
            m.set(&format!("{prefix}.error"), e);
            a.say(format!("{prefix}: {e}"));
        }
    }
}

fn engine(e: Engine) -> CpmgEngine {
    match e {
        Engine::Analytic => CpmgEngine::Analytic,
        Engine::MonteCarlo => CpmgEngine::MonteCarlo,
    }
}

fn bell_slug(kind: BellKind) -> &'static str {
    match kind {
        BellKind::PsiPlus => "psi_plus",
        BellKind::PsiMinus => "psi_minus",
        BellKind::PhiPlus => "phi_plus",
        BellKind::PhiMinus => "phi_minus",
    }
}

pub fn run(protocol: &str, cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let lab = cfg.lab()?;
    let mut a = Artifacts::default();
    match protocol {
        "odmr" => odmr(cfg, &lab, &mut a)?,
        "rabi" => rabi(cfg, &lab, &mut a)?,
        "cpmg" => cpmg(cfg, &lab, &mut a)?,
        "t2scaling" => t2scaling(cfg, &lab, &mut a)?,
        "bell" => bell(cfg, &lab, &mut a)?,
        "tomo" => tomo(cfg, &lab, &mut a)?,
        "acscan" => acscan(cfg, &lab, &mut a)?,
        "correlate" => correlate(cfg, &lab, &mut a)?,
        other => return Err(CliError::Invalid(vec![("protocol".into(), format!("unknown protocol `{other}`"))])),
    }
    Ok(a)
}

fn odmr(cfg: &RunConfig, lab: &Lab, a: &mut Artifacts) -> Result<(), CliError> {
    let o = &cfg.odmr;
    let spec = OdmrSpec {
        start_mhz: o.start_mhz,
        stop_mhz: o.stop_mhz,
        points: o.points,
        rabi_mhz: o.rabi_mhz,
        duration: o.duration_us,
        shots: cfg.shots,
    };
    let rec = run_odmr(lab, &spec, cfg.seed)?;
    let mut m = manifest(cfg, "odmr", "pulsed ODMR spectrum with the two hyperfine-split electron lines");
    let t = &lab.system.table;
    for label in [TransitionLabel::Mw1, TransitionLabel::Mw2] {
        m.set(&format!("line.{label}_mhz"), format!("{:.6}", t.get(label).frequency));
    }
    m.set("mw_splitting_mhz", format!("{:.6}", t.mw_splitting()));
    a.say(format!("MW1 {:.3} MHz, MW2 {:.3} MHz", t.get(TransitionLabel::Mw1).frequency, t.get(TransitionLabel::Mw2).frequency));
    a.csv(cfg, "odmr", &rec)?;
    a.manifest("odmr", &m);
    let expected = rec.column("expected").unwrap_or(&[]);
    a.plot("odmr", "ODMR", "MW frequency (MHz)", "electron-up population", &[
        Series { name: "measured", x: &rec.x, y: &rec.population },
        Series { name: "expected", x: &rec.x, y: expected },
    ])
}

fn rabi(cfg: &RunConfig, lab: &Lab, a: &mut Artifacts) -> Result<(), CliError> {
    let r = &cfg.rabi;
    let target = match r.target.as_str() {
        "dual" => RabiTarget::LocalDualTone { calibrated: true },
        "dual-uncalibrated" => RabiTarget::LocalDualTone { calibrated: false },
        s => RabiTarget::Line(TransitionLabel::parse(s).ok_or_else(|| {
            CliError::Invalid(vec![("rabi.target".into(), format!("unknown target `{s}`"))])
        })?),
    };
    let spec = RabiSpec { target, max_duration: r.max_duration_us, points: r.points, amplitude: None, shots: cfg.shots };
    let rec = run_rabi(lab, &spec, cfg.seed)?;
    let stem = format!("rabi_{}", r.target.replace('-', "_"));
    let mut m = manifest(cfg, "rabi", "Rabi oscillations on the electron and nuclear transitions");
    m.set("target", &r.target);
    let fit = fit_rabi(&rec);
    if let Ok(f) = &fit {
        a.say(format!("Rabi frequency {:.4} +/- {:.4} MHz", f.value("frequency"), f.sigma("frequency")));
    }
    push_fit(&mut m, a, "fit", &fit);
    a.csv(cfg, &stem, &rec)?;
    a.manifest(&stem, &m);
    let expected = rec.column("expected").unwrap_or(&[]);
    a.plot(&stem, &format!("Rabi {}", r.target), "pulse length (us)", "population", &[
        Series { name: "measured", x: &rec.x, y: &rec.population },
        Series { name: "expected", x: &rec.x, y: expected },
    ])
}

/// `tau` for a total-free-time axis `t_max k / points`, `k = 1..=points`.
fn total_time_taus(n: usize, t_max: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| k as f64 * t_max / (2.0 * n as f64 * points as f64)).collect()
}

fn cpmg_spec(n: usize, tau: Vec<f64>, e: Engine, rabi: Option<f64>, shots: u64) -> CpmgSpec {
    CpmgSpec { rabi_mhz: rabi, engine: engine(e), shots, ..CpmgSpec::new(n, tau) }
}

fn coherence_fit(rec: &ExperimentRecord) -> spinlab::Result<FitResult> {
    let c = rec.column("coherence").ok_or_else(|| SpinLabError::Fit("record has no coherence column".into()))?;
    fit_stretched_exponential_fixed_offset(&rec.x, c, 0.0)
}

fn cpmg(cfg: &RunConfig, lab: &Lab, a: &mut Artifacts) -> Result<(), CliError> {
    let c = &cfg.cpmg;
    let spec = cpmg_spec(c.n_pulses, total_time_taus(c.n_pulses, c.t_max_us, c.points), c.engine, c.rabi_mhz, cfg.shots);
    let rec = run_cpmg(lab, &spec, cfg.seed)?;
    let stem = format!("cpmg_n{}", c.n_pulses);
    let mut m = manifest(cfg, "cpmg", "CPMG coherence decay of the electron spin");
    m.set("n_pulses", c.n_pulses);
    let fit = coherence_fit(&rec);
    if let Ok(f) = &fit {
        a.say(format!("CPMG-{} T2 = {:.4} +/- {:.4} us", c.n_pulses, f.value("t2"), f.sigma("t2")));
    }
    push_fit(&mut m, a, "fit", &fit);
    a.csv(cfg, &stem, &rec)?;
    a.manifest(&stem, &m);
    a.plot(&stem, &format!("CPMG-{}", c.n_pulses), "total free time (us)", "coherence", &[
        Series { name: "measured", x: &rec.x, y: rec.column("coherence").unwrap_or(&[]) },
        Series { name: "expected", x: &rec.x, y: rec.column("expected").unwrap_or(&[]) },
    ])
}

fn t2scaling(cfg: &RunConfig, lab: &Lab, a: &mut Artifacts) -> Result<(), CliError> {
    let t = &cfg.t2scaling;
    let mut records = Vec::with_capacity(t.n.len());
    let mut oracle = Vec::with_capacity(t.n.len());
    for (k, &n) in t.n.iter().enumerate() {
        // the axis is scaled to the expected decay so every N is resolved
        let t2 = cpmg_t2_analytic(n, &lab.noise)?;
        oracle.push(t2);
        let spec = cpmg_spec(n, total_time_taus(n, t.window * t2, t.points), t.engine, t.rabi_mhz, cfg.shots);
        records.push((n, run_cpmg(lab, &spec, derive_seed(cfg.seed, "t2scaling", k as u64))?));
    }
    let scaling = extract_t2_scaling(&records)?;
    let ns: Vec<f64> = t.n.iter().map(|&n| n as f64).collect();
    let oracle_fit = fit_power_law(&ns, &oracle)?;
    let mut m = manifest(cfg, "t2scaling", "power-law growth of the CPMG coherence time with pulse number");
    m.set("beta", format!("{:.6}", scaling.beta));
    m.set("beta_sigma", format!("{:.6}", scaling.beta_sigma));
    m.set("beta_analytic", format!("{:.6}", oracle_fit.value("beta")));
    m.push_fit("power_law", &scaling.power_law);
    a.say(format!(
        "beta = {:.4} +/- {:.4} (analytic exponent of the configured spectrum {:.4})",
        scaling.beta,
        scaling.beta_sigma,
        oracle_fit.value("beta")
    ));

    let mut summary = ExperimentRecord::new("t2scaling", "n_pulses", "count", cfg.shots);
    let (mut t2, mut t2_sigma) = (Vec::new(), Vec::new());
    for ((n, fit), &o) in scaling.per_n.iter().zip(&oracle) {
        summary.push(*n as f64, 0, 0, fit.value("t2"));
        t2.push(fit.value("t2"));
        t2_sigma.push(fit.sigma("t2"));
        m.push_fit(&format!("n{n}"), fit);
        a.say(format!("  N = {n:>5}: T2 = {:.4} +/- {:.4} us (analytic {o:.4})", fit.value("t2"), fit.sigma("t2")));
    }
    summary.extra.push(("t2_us".into(), t2.clone()));
    summary.extra.push(("t2_sigma_us".into(), t2_sigma));
    summary.extra.push(("t2_analytic_us".into(), oracle.clone()));
    summary.meta("population_column", "fitted T2 in us");
    for (n, rec) in &records {
        let stem = format!("t2scaling_n{n:04}");
        a.csv(cfg, &stem, rec)?;
    }
    a.csv(cfg, "t2scaling", &summary)?;
    a.manifest("t2scaling", &m);
    let lx: Vec<f64> = ns.iter().map(|n| n.log10()).collect();
    let ly: Vec<f64> = t2.iter().map(|v| v.log10()).collect();
    let lo: Vec<f64> = oracle.iter().map(|v| v.log10()).collect();
    a.plot("t2scaling", "T2 scaling", "log10 N", "log10 T2 (us)", &[
        Series { name: "fitted", x: &lx, y: &ly },
        Series { name: "analytic", x: &lx, y: &lo },
    ])
}

/// Per-setting populations against the prediction of `rho`.
fn tomography_record(cfg: &RunConfig, lab: &Lab, data: &TomogramData, rho: &DensityMatrix<f64>) -> ExperimentRecord {
    let mut rec = ExperimentRecord::new("tomography", "setting", "index", data.shots);
    let p = data.populations(&lab.readout);
    for (k, ((s, r), p)) in data.counts_signal.iter().zip(&data.counts_reference).zip(p).enumerate() {
        rec.push(k as f64, s.round() as u64, r.round() as u64, p);
    }
    let predicted = data.povms.iter().map(|e| e.inner(rho.matrix()).re).collect();
    rec.extra.push(("mle_prediction".into(), predicted));
    rec.meta("settings", data.labels.join(" "));
    rec.meta("exact_counts", data.exact);
    rec.meta("seed", cfg.seed);
    rec
}

fn tomography_plot(a: &mut Artifacts, stem: &str, title: &str, rec: &ExperimentRecord) -> Result<(), CliError> {
    a.plot(stem, title, "setting (4 e + n, I X Y Z)", "electron-up population", &[
        Series { name: "measured", x: &rec.x, y: &rec.population },
        Series { name: "MLE prediction", x: &rec.x, y: rec.column("mle_prediction").unwrap_or(&[]) },
    ])
}

fn bell(cfg: &RunConfig, lab: &Lab, a: &mut Artifacts) -> Result<(), CliError> {
    let b = &cfg.bell;
    let kind = BellKind::parse(&b.kind)
        .ok_or_else(|| CliError::Invalid(vec![("bell.kind".into(), format!("unknown Bell state `{}`", b.kind))]))?;
    let spec = BellSpec {
        kind,
        // with the noise off, photon shot noise goes too
        shots: if b.exact || !cfg.noise.enabled { Shots::Infinite } else { Shots::Finite(b.tomography_shots) },
        noisy: cfg.noise.enabled,
        noisy_tomography: b.noisy_tomography,
    };
    let r = run_bell_protocol(lab, &spec, cfg.seed)?;
    let stem = format!("bell_{}", bell_slug(kind));
    let mut m = manifest(cfg, "bell", "Bell-state preparation and its density-matrix tomography");
    m.set("kind", &b.kind);
    m.set("fidelity", format!("{:.6}", r.fidelity));
    m.set("prepared_fidelity", format!("{:.6}", r.prepared_fidelity));
    let target = bell_state(kind);
    if let Ok(f) = pseudo_pure_fidelity(&r.reconstructed, &target) {
        m.set("pseudo_pure_fidelity", format!("{f:.6}"));
    }
    let li = linear_inversion(&r.data, &lab.readout)?;
    m.set("linear_inversion_min_eigenvalue", format!("{:.6}", li.min_eigenvalue));
    a.say(format!("{} fidelity {:.4} (prepared state {:.4})", b.kind, r.fidelity, r.prepared_fidelity));
    let rec = tomography_record(cfg, lab, &r.data, &r.reconstructed);
    a.csv(cfg, &stem, &rec)?;
    a.files.push((
        format!("{stem}.rho.txt"),
        format!("## reconstructed\n{}## prepared\n{}", format_density_matrix(&r.reconstructed), format_density_matrix(&r.prepared)),
    ));
    a.manifest(&stem, &m);
    tomography_plot(a, &stem, &format!("Bell {} tomography", b.kind), &rec)
}

fn tomo(cfg: &RunConfig, lab: &Lab, a: &mut Artifacts) -> Result<(), CliError> {
    let t = &cfg.tomo;
    let kind = BellKind::parse(&t.state)
        .ok_or_else(|| CliError::Invalid(vec![("tomo.state".into(), format!("unknown Bell state `{}`", t.state))]))?;
    let target = bell_state::<f64>(kind);
    let mixed = Mat4::from_fn(|i, j| {
        let v = target.matrix().m[i][j] * (1.0 - t.mixing);
        if i == j {
            v + 0.25 * t.mixing
        } else {
            v
        }
    });
    let rho = DensityMatrix::new(mixed)?;
    let settings = measurement_settings(&lab.system, &lab.calibration, &lab.drive, &lab.compile)?;
    let shots = if t.exact { Shots::Infinite } else { Shots::Finite(t.shots) };
    let data =
        simulate_tomography(&rho, &settings, &lab.system, &lab.readout, shots, derive_seed(cfg.seed, "tomo", 0), None)?;
    let li = linear_inversion(&data, &lab.readout)?;
    let mle = mle_reconstruct(&data, &lab.readout)?;
    let stem = format!("tomo_{}", bell_slug(kind));
    let mut m = manifest(cfg, "tomo", "two-qubit tomography round trip through the 16 readout settings");
    m.set("state", &t.state);
    m.set("mixing", t.mixing);
    m.set("fidelity_to_input", format!("{:.6}", fidelity(&mle, &rho)?));
    m.set("fidelity_to_bell", format!("{:.6}", fidelity(&mle, &target)?));
    m.set("trace_distance", format!("{:.3e}", mle.trace_distance(&rho)));
    m.set("linear_inversion_physical", li.is_physical());
    m.set("linear_inversion_min_eigenvalue", format!("{:.6}", li.min_eigenvalue));
    a.say(format!("MLE fidelity to the input state {:.5}, trace distance {:.2e}", fidelity(&mle, &rho)?, mle.trace_distance(&rho)));
    let rec = tomography_record(cfg, lab, &data, &mle);
    a.csv(cfg, &stem, &rec)?;
    a.files.push((
        format!("{stem}.rho.txt"),
        format!("## maximum likelihood\n{}## input\n{}", format_density_matrix(&mle), format_density_matrix(&rho)),
    ));
    a.manifest(&stem, &m);
    tomography_plot(a, &stem, &format!("tomography of {}", t.state), &rec)
}

fn acscan(cfg: &RunConfig, lab: &Lab, a: &mut Artifacts) -> Result<(), CliError> {
    let s = &cfg.acscan;
    let field = AcFieldSpec {
        f_ac: s.f_ac_mhz,
        amplitude_ut: s.amplitude_ut,
        phase: s.phase_rad.map_or(AcPhase::RandomPerShot, AcPhase::Fixed),
    };
    let spec = CpmgSpec {
        field: Some(field),
        ..cpmg_spec(s.n_pulses, linspace(s.tau_start_us, s.tau_stop_us, s.points), s.engine, s.rabi_mhz, cfg.shots)
    };
    let mut rec = run_ac_field_scan(lab, &spec, cfg.seed)?;
    // dividing by the field-free expectation removes the dephasing background,
    // which otherwise drags the minima towards longer tau
    let reference = run_cpmg(lab, &CpmgSpec { field: None, engine: CpmgEngine::Analytic, ..spec.clone() }, cfg.seed)?;
    let expected = rec.column("expected").unwrap_or(&[]).to_vec();
    let response: Vec<f64> = expected
        .iter()
        .zip(reference.column("expected").unwrap_or(&[]))
        .map(|(c, r)| if *r > 0.0 { c / r } else { f64::NAN })
        .collect();
    rec.extra.push(("ac_response".into(), response.clone()));
    let exact = if s.exact_oracle { Some(ac_scan_exact(lab, &spec)?) } else { None };
    if let Some(e) = &exact {
        rec.extra.push(("exact".into(), e.clone()));
    }
    let mut m = manifest(cfg, "acscan", "AC-field sensing dips of CPMG versus pulse spacing, with the finite-pulse offset");
    let t_pi = s.rabi_mhz.map_or(0.0, |r| 0.5 / r);
    let quarter = 0.25 / s.f_ac_mhz;
    for k in [1usize, 3] {
        let ideal = field.resonant_tau(k);
        let shifted = ideal - 0.5 * t_pi;
        m.set(&format!("dip{k}.ideal_us"), format!("{ideal:.6}"));
        m.set(&format!("dip{k}.half_pulse_estimate_us"), format!("{shifted:.6}"));
        let (lo, hi) = (shifted - 0.5 * quarter, shifted + 0.5 * quarter);
        if let Some(d) = find_dip(&rec.x, &response, lo, hi) {
            m.set(&format!("dip{k}.simulated_us"), format!("{d:.6}"));
            a.say(format!("k = {k}: dip at {:.2} ns (ideal {:.2} ns)", d * 1e3, ideal * 1e3));
        }
        if let Some(d) = exact.as_deref().and_then(|e| find_dip(&rec.x, e, lo, hi)) {
            m.set(&format!("dip{k}.exact_us"), format!("{d:.6}"));
        }
    }
    a.csv(cfg, "acscan", &rec)?;
    a.manifest("acscan", &m);
    let mut series = vec![
        Series { name: "measured", x: &rec.x, y: rec.column("coherence").unwrap_or(&[]) },
        Series { name: "expected", x: &rec.x, y: &expected },
        Series { name: "AC response", x: &rec.x, y: &response },
    ];
    if let Some(e) = &exact {
        series.push(Series { name: "exact", x: &rec.x, y: e });
    }
    a.plot("acscan", &format!("AC sensing, {} MHz", s.f_ac_mhz), "tau (us)", "coherence", &series)
}

fn correlate(cfg: &RunConfig, lab: &Lab, a: &mut Artifacts) -> Result<(), CliError> {
    let c = &cfg.correlate;
    let mut spec = CorrelationSpec {
        field: AcFieldSpec { f_ac: c.f_ac_mhz, amplitude_ut: c.amplitude_ut, phase: AcPhase::RandomPerShot },
        n_pulses: c.n_pulses,
        tau: c.tau(),
        rabi_mhz: c.rabi_mhz,
        memory: c.memory,
        t_axis: vec![],
        shots: cfg.shots,
        phase_samples: c.phase_samples,
        sampling_reference: c.f_ac_mhz,
    };
    let start = spec.min_separation(lab)?;
    if c.t_max() <= start {
        return Err(CliError::Invalid(vec![(
            "correlate.t_max_us".into(),
            format!("must exceed the shortest separation {start:.4} us"),
        )]));
    }
    spec.t_axis = correlation_axis(c.f_ac_mhz, start, c.t_max(), c.points, c.offset_fraction)?;
    let r = run_correlation(lab, &spec, cfg.seed)?;
    let tag = if c.memory { "on" } else { "off" };
    let stem = format!("correlate_memory_{tag}");
    let mut m = manifest(
        cfg,
        "correlate",
        "correlation spectroscopy of an AC field, with and without storage in the nuclear memory",
    );
    m.set("memory", c.memory);
    m.set("tau_us", format!("{:.6}", c.tau()));
    m.set("phi0_rad", format!("{:.6}", r.phi0));
    m.set("envelope_tau_us", format!("{:.6}", r.envelope_tau));
    m.set("linewidth_khz", format!("{:.6}", r.linewidth_khz));
    m.set("frequency_estimate_mhz", format!("{:.6}", r.frequency_estimate));
    m.set("peak_significance", format!("{:.3}", r.spectrum.peak_significance));
    match &r.envelope_fit {
        Some(f) => m.push_fit("envelope", f),
        None => m.set("envelope.error", "damped-cosine fit did not converge"),
    }
    a.say(format!(
        "memory {tag}: envelope {:.1} us, linewidth {:.3} kHz, frequency {:.5} MHz",
        r.envelope_tau, r.linewidth_khz, r.frequency_estimate
    ));
    a.csv(cfg, &stem, &r.record)?;
    a.manifest(&stem, &m);
    a.plot(&stem, &format!("correlation, memory {tag}"), "separation T (us)", "electron-up population", &[
        Series { name: "measured", x: &r.t_axis, y: &r.p_values },
        Series { name: "expected", x: &r.t_axis, y: &r.expected },
    ])
}
