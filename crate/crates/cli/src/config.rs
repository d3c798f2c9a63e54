//! Run configuration: a TOML file merged with command-line overrides.
//!
//! Every key is optional except `seed`; missing keys take the calibrated
//! defaults listed in `spinlab.example.toml`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinlab::noise::{NoiseModel, SpectrumShape};
use spinlab::protocols::Lab;
use spinlab::pulse::TransferModel;
use spinlab::spin::HyperfineTensor;
use spinlab::{BellKind, SystemConfig, TransitionLabel};

use crate::error::CliError;

pub const PROTOCOLS: [&str; 8] = ["odmr", "rabi", "cpmg", "t2scaling", "bell", "tomo", "acscan", "correlate"];

/// Overrides the output directory regardless of the file and flags.
pub const OUTPUT_DIR_ENV: &str = "SPINLAB_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Protocol run by `spinlab run`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
    pub seed: u64,
    pub output_dir: String,
    /// Repetitions per sweep point.
    pub shots: u64,
    /// Noise realizations per ensemble average.
    pub trajectories: usize,
    pub system: SystemSection,
    pub drive: DriveSection,
    pub noise: NoiseSection,
    pub odmr: OdmrSection,
    pub rabi: RabiSection,
    pub cpmg: CpmgSection,
    pub t2scaling: T2ScalingSection,
    pub bell: BellSection,
    pub tomo: TomoSection,
    pub acscan: AcScanSection,
    pub correlate: CorrelateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            protocol: None,
            seed: 1,
            output_dir: "spinlab-out".into(),
            shots: 10_000,
            trajectories: 400,
            system: SystemSection::default(),
            drive: DriveSection::default(),
            noise: NoiseSection::default(),
            odmr: OdmrSection::default(),
            rabi: RabiSection::default(),
            cpmg: CpmgSection::default(),
            t2scaling: T2ScalingSection::default(),
            bell: BellSection::default(),
            tomo: TomoSection::default(),
            acscan: AcScanSection::default(),
            correlate: CorrelateSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    pub counts_bright: f64,
    pub contrast: f64,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        let r = spinlab::noise::ReadoutModel::<f64>::default();
        Self { counts_bright: r.counts_bright, contrast: r.contrast }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub b0_tesla: [f64; 3],
    pub gamma_e_mhz_per_t: f64,
    pub gamma_n_mhz_per_t: f64,
    /// Rows of `A_ij`, MHz.
    pub hyperfine_mhz: [[f64; 3]; 3],
    pub t1_electron_s: f64,
    pub t1_nuclear_s: f64,
    pub readout: ReadoutSection,
}

impl Default for SystemSection {
    fn default() -> Self {
        let c = SystemConfig::<f64>::hbn_default();
        Self {
            b0_tesla: c.b0,
            gamma_e_mhz_per_t: c.gamma_e,
            gamma_n_mhz_per_t: c.gamma_n,
            hyperfine_mhz: c.hyperfine.a,
            t1_electron_s: c.t1_electron,
            t1_nuclear_s: c.t1_nuclear,
            readout: ReadoutSection::default(),
        }
    }
}

impl SystemSection {
    pub fn to_config(&self) -> SystemConfig<f64> {
        SystemConfig {
            b0: self.b0_tesla,
            gamma_e: self.gamma_e_mhz_per_t,
            gamma_n: self.gamma_n_mhz_per_t,
            hyperfine: HyperfineTensor { a: self.hyperfine_mhz },
            t1_electron: self.t1_electron_s,
            t1_nuclear: self.t1_nuclear_s,
            readout: spinlab::noise::ReadoutModel {
                counts_bright: self.readout.counts_bright,
                contrast: self.readout.contrast,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    /// Effective Rabi frequency on MW1.
    pub mw_rabi_mhz: f64,
    /// Effective Rabi frequency on RF1.
    pub rf_rabi_mhz: f64,
    /// Amplitude transfer at MW2 relative to MW1.
    pub mw2_gain: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self { mw_rabi_mhz: 5.0, rf_rabi_mhz: 0.8, mw2_gain: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Lorentzian,
    LorentzianSquared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// `false` turns off dephasing and relaxation.
    pub enabled: bool,
    pub sigma_mhz: f64,
    pub tau_c_us: f64,
    pub shape: Shape,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseModel::default();
        Self { enabled: true, sigma_mhz: n.ou_sigma, tau_c_us: n.ou_tau_c, shape: Shape::LorentzianSquared }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Analytic,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdmrSection {
    pub start_mhz: f64,
    pub stop_mhz: f64,
    pub points: usize,
    pub rabi_mhz: f64,
    /// Pulse length; a pi pulse at `rabi_mhz` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
}

impl Default for OdmrSection {
    fn default() -> Self {
        Self { start_mhz: 1850.0, stop_mhz: 2300.0, points: 451, rabi_mhz: 2.0, duration_us: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiSection {
    /// `mw1`, `mw2`, `rf1`, `rf2`, `dual` or `dual-uncalibrated`.
    pub target: String,
    pub max_duration_us: f64,
    pub points: usize,
}

impl Default for RabiSection {
    fn default() -> Self {
        Self { target: "mw1".into(), max_duration_us: 1.0, points: 101 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpmgSection {
    pub n_pulses: usize,
    /// End of the total-free-time axis.
    pub t_max_us: f64,
    pub points: usize,
    pub engine: Engine,
    /// Finite pulses at this Rabi frequency; instantaneous when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi_mhz: Option<f64>,
}

impl Default for CpmgSection {
    fn default() -> Self {
        Self { n_pulses: 1, t_max_us: 0.4, points: 40, engine: Engine::Analytic, rabi_mhz: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct T2ScalingSection {
    pub n: Vec<usize>,
    pub points: usize,
    /// Each axis spans this many analytic T2 estimates.
    pub window: f64,
    pub engine: Engine,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi_mhz: Option<f64>,
}

impl Default for T2ScalingSection {
    fn default() -> Self {
        Self { n: vec![1, 4, 16, 64, 256, 1024], points: 40, window: 3.0, engine: Engine::Analytic, rabi_mhz: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BellSection {
    /// `psi+`, `psi-`, `phi+` or `phi-`.
    pub kind: String,
    /// Shots per tomography setting.
    pub tomography_shots: u64,
    /// Expected counts instead of Poisson samples.
    pub exact: bool,
    /// Also apply the noise to the tomography pulses.
    pub noisy_tomography: bool,
}

impl Default for BellSection {
    fn default() -> Self {
        Self { kind: "psi+".into(), tomography_shots: 10_000, exact: false, noisy_tomography: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomoSection {
    /// Bell state mixed with `I/4`.
    pub state: String,
    /// Weight of `I/4`, in `[0, 1)`.
    pub mixing: f64,
    pub shots: u64,
    pub exact: bool,
}

impl Default for TomoSection {
    fn default() -> Self {
        Self { state: "psi+".into(), mixing: 0.0, shots: 100_000, exact: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcScanSection {
    pub f_ac_mhz: f64,
    pub amplitude_ut: f64,
    /// Fixed field phase in radians; a random phase per shot when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_rad: Option<f64>,
    pub n_pulses: usize,
    pub tau_start_us: f64,
    pub tau_stop_us: f64,
    pub points: usize,
    pub engine: Engine,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi_mhz: Option<f64>,
    /// Adds the exact lab-frame propagation as a column (slow).
    pub exact_oracle: bool,
}

impl Default for AcScanSection {
    fn default() -> Self {
        Self {
            f_ac_mhz: 15.0,
            amplitude_ut: 40.0,
            phase_rad: None,
            n_pulses: 4,
            tau_start_us: 0.0005,
            tau_stop_us: 0.06,
            points: 120,
            engine: Engine::Analytic,
            rabi_mhz: Some(25.0),
            exact_oracle: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelateSection {
    pub f_ac_mhz: f64,
    pub amplitude_ut: f64,
    pub n_pulses: usize,
    /// Defaults to the first resonance corrected for the pi-pulse length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_us: Option<f64>,
    pub rabi_mhz: f64,
    pub memory: bool,
    /// Last separation; 400 us without and 1000 us with the memory when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max_us: Option<f64>,
    pub points: usize,
    /// Sub-period part of the sampling step, in cycles of `f_ac`.
    pub offset_fraction: f64,
    pub phase_samples: usize,
}

impl Default for CorrelateSection {
    fn default() -> Self {
        Self {
            f_ac_mhz: 15.0,
            amplitude_ut: 33.0,
            n_pulses: 8,
            tau_us: None,
            rabi_mhz: 50.0,
            memory: false,
            t_max_us: None,
            points: 64,
            offset_fraction: 0.1,
            phase_samples: 200,
        }
    }
}

impl CorrelateSection {
    pub fn t_max(&self) -> f64 {
        self.t_max_us.unwrap_or(if self.memory { 1000.0 } else { 400.0 })
    }

    pub fn tau(&self) -> f64 {
        self.tau_us.unwrap_or(0.25 / self.f_ac_mhz - 0.5 / self.rabi_mhz / 2.0)
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl RunConfig {
    /// Parses TOML text, applies `key.path=value` overrides, then the output
    /// directory from the environment.
    pub fn load(text: &str, overrides: &[(String, String)], env_dir: Option<String>) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
        if !table.contains_key("seed") && overrides.iter().all(|(k, _)| k != "seed") {
            return Err(CliError::Invalid(vec![("seed".into(), "required; runs are never seeded from the clock".into())]));
        }
        for (key, value) in overrides {
            set_path(&mut table, key, parse_value(value))?;
        }
        let mut cfg: RunConfig =
            RunConfig::deserialize(table).map_err(|e| CliError::Parse(e.to_string()))?;
        if let Some(dir) = env_dir.filter(|d| !d.is_empty()) {
            cfg.output_dir = dir;
        }
        Ok(cfg)
    }

    /// Canonical TOML of everything that affects results.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output_dir = String::new();
        toml::to_string(&c).expect("config always serializes")
    }

    /// SHA-256 of [`Self::canonical`], first 16 hex digits.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn noise_model(&self) -> NoiseModel {
        let sys = self.system.to_config();
        if !self.noise.enabled {
            return NoiseModel::noiseless();
        }
        NoiseModel {
            ou_sigma: self.noise.sigma_mhz,
            ou_tau_c: self.noise.tau_c_us,
            shape: match self.noise.shape {
                Shape::Lorentzian => SpectrumShape::Lorentzian,
                Shape::LorentzianSquared => SpectrumShape::LorentzianSquared,
            },
            ..NoiseModel::for_system(&sys)
        }
    }

    pub fn lab(&self) -> spinlab::Result<Lab> {
        let sys = self.system.to_config();
        let mut lab = Lab::new(&sys, self.noise_model(), self.drive.mw_rabi_mhz, self.drive.rf_rabi_mhz, self.trajectories)?;
        if self.drive.mw2_gain != 1.0 {
            let t = &lab.system.table;
            let (f1, f2) = (t.get(TransitionLabel::Mw1).frequency, t.get(TransitionLabel::Mw2).frequency);
            lab.system = lab.system.clone().with_transfer(TransferModel::two_point(f1, 1.0, f2, self.drive.mw2_gain));
            lab.calibration = spinlab::pulse::calibrate_dual_tone(&lab.system, &lab.drive)?;
        }
        Ok(lab)
    }

    /// Every invariant violation as `(key path, message)`.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = self.system.to_config().violations();
        let mut bad = |k: &str, m: &str| out.push((k.to_string(), m.to_string()));
        if let Some(p) = &self.protocol {
            if !PROTOCOLS.contains(&p.as_str()) {
                bad("protocol", &format!("unknown protocol `{p}`; expected one of {}", PROTOCOLS.join(", ")));
            }
        }
        if self.output_dir.is_empty() {
            bad("output_dir", "must not be empty");
        } else if std::path::Path::new(&self.output_dir).is_file() {
            bad("output_dir", "exists and is a file");
        }
        if self.shots == 0 {
            bad("shots", "must be at least 1");
        }
        if self.trajectories == 0 {
            bad("trajectories", "must be at least 1");
        }
        if !positive(self.drive.mw_rabi_mhz) {
            bad("drive.mw_rabi_mhz", "must be finite and > 0");
        }
        if !positive(self.drive.rf_rabi_mhz) {
            bad("drive.rf_rabi_mhz", "must be finite and > 0");
        }
        if !positive(self.drive.mw2_gain) {
            bad("drive.mw2_gain", "must be finite and > 0");
        }
        if !(self.noise.sigma_mhz.is_finite() && self.noise.sigma_mhz >= 0.0) {
            bad("noise.sigma_mhz", "must be finite and >= 0");
        }
        if !positive(self.noise.tau_c_us) {
            bad("noise.tau_c_us", "must be finite and > 0");
        }

        let o = &self.odmr;
        if !(o.start_mhz.is_finite() && o.stop_mhz.is_finite() && o.stop_mhz > o.start_mhz) {
            bad("odmr.stop_mhz", "must exceed odmr.start_mhz");
        }
        if o.points < 2 {
            bad("odmr.points", "must be at least 2");
        }
        if !positive(o.rabi_mhz) {
            bad("odmr.rabi_mhz", "must be finite and > 0");
        }
        if o.duration_us.is_some_and(|d| !positive(d)) {
            bad("odmr.duration_us", "must be finite and > 0");
        }

        let r = &self.rabi;
        if !matches!(r.target.as_str(), "dual" | "dual-uncalibrated") && TransitionLabel::parse(&r.target).is_none() {
            bad("rabi.target", "expected mw1, mw2, rf1, rf2, dual or dual-uncalibrated");
        }
        if !positive(r.max_duration_us) {
            bad("rabi.max_duration_us", "must be finite and > 0");
        }
        if r.points < 2 {
            bad("rabi.points", "must be at least 2");
        }

        let c = &self.cpmg;
        if c.n_pulses == 0 {
            bad("cpmg.n_pulses", "must be at least 1");
        }
        if !positive(c.t_max_us) {
            bad("cpmg.t_max_us", "must be finite and > 0");
        }
        if c.points < 2 {
            bad("cpmg.points", "must be at least 2");
        }
        check_engine(&mut bad, "cpmg", c.engine, c.rabi_mhz);

        let t = &self.t2scaling;
        if t.n.len() < 4 {
            bad("t2scaling.n", "needs at least 4 pulse numbers");
        }
        if t.n.contains(&0) {
            bad("t2scaling.n", "pulse numbers must be >= 1");
        }
        if t.points < 5 {
            bad("t2scaling.points", "must be at least 5");
        }
        if !positive(t.window) {
            bad("t2scaling.window", "must be finite and > 0");
        }
        check_engine(&mut bad, "t2scaling", t.engine, t.rabi_mhz);

        let b = &self.bell;
        if BellKind::parse(&b.kind).is_none() {
            bad("bell.kind", "expected psi+, psi-, phi+ or phi-");
        }
        if b.tomography_shots == 0 {
            bad("bell.tomography_shots", "must be at least 1");
        }

        let m = &self.tomo;
        if BellKind::parse(&m.state).is_none() {
            bad("tomo.state", "expected psi+, psi-, phi+ or phi-");
        }
        if !(0.0..1.0).contains(&m.mixing) {
            bad("tomo.mixing", "must lie in [0, 1)");
        }
        if m.shots == 0 {
            bad("tomo.shots", "must be at least 1");
        }

        let a = &self.acscan;
        if !positive(a.f_ac_mhz) {
            bad("acscan.f_ac_mhz", "must be finite and > 0");
        }
        if !(a.amplitude_ut.is_finite() && a.amplitude_ut >= 0.0) {
            bad("acscan.amplitude_ut", "must be finite and >= 0");
        }
        if a.phase_rad.is_some_and(|p| !p.is_finite()) {
            bad("acscan.phase_rad", "must be finite");
        }
        if a.n_pulses == 0 {
            bad("acscan.n_pulses", "must be at least 1");
        }
        if !(a.tau_start_us >= 0.0 && a.tau_stop_us.is_finite() && a.tau_stop_us > a.tau_start_us) {
            bad("acscan.tau_stop_us", "must exceed acscan.tau_start_us >= 0");
        }
        if a.points < 2 {
            bad("acscan.points", "must be at least 2");
        }
        check_engine(&mut bad, "acscan", a.engine, a.rabi_mhz);
        if a.exact_oracle && a.rabi_mhz.is_none() {
            bad("acscan.exact_oracle", "needs finite pulses (acscan.rabi_mhz)");
        }

        let k = &self.correlate;
        if !positive(k.f_ac_mhz) {
            bad("correlate.f_ac_mhz", "must be finite and > 0");
        }
        if !(k.amplitude_ut.is_finite() && k.amplitude_ut >= 0.0) {
            bad("correlate.amplitude_ut", "must be finite and >= 0");
        }
        if k.n_pulses == 0 {
            bad("correlate.n_pulses", "must be at least 1");
        }
        if !positive(k.rabi_mhz) {
            bad("correlate.rabi_mhz", "must be finite and > 0");
        } else if positive(k.f_ac_mhz) && !(k.tau() >= 0.0 && k.tau().is_finite()) {
            bad("correlate.tau_us", "must be finite and >= 0");
        }
        if !positive(k.t_max()) {
            bad("correlate.t_max_us", "must be finite and > 0");
        }
        if k.points < 4 {
            bad("correlate.points", "must be at least 4");
        }
        if !(0.0..0.5).contains(&k.offset_fraction) {
            bad("correlate.offset_fraction", "must lie in [0, 0.5)");
        }
        if k.phase_samples == 0 {
            bad("correlate.phase_samples", "must be at least 1");
        }
        out
    }
}

fn check_engine(bad: &mut impl FnMut(&str, &str), section: &str, engine: Engine, rabi: Option<f64>) {
    if rabi.is_some_and(|r| !positive(r)) {
        bad(&format!("{section}.rabi_mhz"), "must be finite and > 0");
    }
    if engine == Engine::MonteCarlo && rabi.is_none() {
        bad(&format!("{section}.engine"), "monte-carlo needs finite pulses; set rabi_mhz");
    }
}

/// A TOML literal if it parses as one, else a bare string.
fn parse_value(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| bad_key(path))?;
    let mut node = table;
    for p in parts {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| bad_key(path))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn bad_key(path: &str) -> CliError {
    CliError::Invalid(vec![(path.to_string(), "override does not name a key".into())])
}
