use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SpinLabError};
use crate::spin::SystemConfig;

/// Shape of the stationary Gaussian detuning process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpectrumShape {
    /// Ornstein-Uhlenbeck: `C(t) = s^2 exp(-|t|/tc)`, `S(w) = 2 s^2 tc / (1 + w^2 tc^2)`.
    Lorentzian,
    /// Two cascaded OU stages: `C(t) = s^2 (1 + |t|/tc) exp(-|t|/tc)`,
    /// `S(w) = 4 s^2 tc / (1 + w^2 tc^2)^2`. Its faster high-frequency roll-off
    /// gives a steeper `T2 ~ N^beta` scaling than the single stage.
    LorentzianSquared,
}

impl SpectrumShape {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lorentzian" | "ou" => Some(Self::Lorentzian),
            "lorentzian2" | "lorentzian_squared" | "cascaded" => Some(Self::LorentzianSquared),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Lorentzian => "lorentzian",
            Self::LorentzianSquared => "lorentzian2",
        }
    }
}

/// Electron dephasing plus phenomenological relaxation. Times in us, `sigma` in MHz.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    pub ou_sigma: f64,
    pub ou_tau_c: f64,
    pub t1_electron: f64,
    pub t1_nuclear: f64,
    pub shape: SpectrumShape,
}

/// Calibrated so that a Hahn echo decays to 1/e at 148 ns and CPMG-1024 at a
/// few tens of us (see the crate README for the derivation).
pub const DEFAULT_SIGMA_MHZ: f64 = 5.0;
pub const DEFAULT_TAU_C_US: f64 = 0.081_865;

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            ou_sigma: DEFAULT_SIGMA_MHZ,
            ou_tau_c: DEFAULT_TAU_C_US,
            t1_electron: 130.0,
            t1_nuclear: 1000.0,
            shape: SpectrumShape::LorentzianSquared,
        }
    }
}

impl NoiseModel {
    /// Default dephasing with relaxation times taken from `config` (seconds to us).
    pub fn for_system(config: &SystemConfig<f64>) -> Self {
        Self { t1_electron: config.t1_electron * 1e6, t1_nuclear: config.t1_nuclear * 1e6, ..Self::default() }
    }

    pub fn noiseless() -> Self {
        Self { ou_sigma: 0.0, t1_electron: f64::INFINITY, t1_nuclear: f64::INFINITY, ..Self::default() }
    }

    pub fn without_relaxation(&self) -> Self {
        Self { t1_electron: f64::INFINITY, t1_nuclear: f64::INFINITY, ..self.clone() }
    }

    pub fn is_dephasing_free(&self) -> bool {
        self.ou_sigma == 0.0
    }

    /// Free-induction decay time `sqrt 2 / (2 pi sigma)` in us.
    pub fn t2_star(&self) -> f64 {
        2f64.sqrt() / (TAU * self.ou_sigma)
    }

    /// Autocorrelation `C(t)` in MHz^2.
    pub fn correlation(&self, t: f64) -> f64 {
        let u = t.abs() / self.ou_tau_c;
        let s2 = self.ou_sigma * self.ou_sigma;
        match self.shape {
            SpectrumShape::Lorentzian => s2 * (-u).exp(),
            SpectrumShape::LorentzianSquared => s2 * (1.0 + u) * (-u).exp(),
        }
    }

    /// Two-sided power spectral density `S(w) = int C(t) exp(-i w t) dt`, w in rad/us.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        let s2 = self.ou_sigma * self.ou_sigma;
        let tc = self.ou_tau_c;
        let d = 1.0 + (omega * tc).powi(2);
        match self.shape {
            SpectrumShape::Lorentzian => 2.0 * s2 * tc / d,
            SpectrumShape::LorentzianSquared => 4.0 * s2 * tc / (d * d),
        }
    }

    /// `int_w^inf S(x) / x^2 dx` in closed form.
    pub fn tail_integral(&self, w: f64) -> f64 {
        let s2 = self.ou_sigma * self.ou_sigma;
        let tc = self.ou_tau_c;
        // with v = 1 / (w tc) both shapes reduce to tc^2 g(v), where g cancels
        // to O(v^3) or O(v^5); the series keeps it accurate for slow noise
        let v = 1.0 / (w * tc);
        let g = match self.shape {
            SpectrumShape::Lorentzian => odd_series(v, |k| -(-1f64).powi(k) / (2 * k + 1) as f64)
                .unwrap_or_else(|| v - v.atan()),
            SpectrumShape::LorentzianSquared => {
                odd_series(v, |k| (-1f64).powi(k) * (0.5 - 1.5 / (2 * k + 1) as f64))
                    .unwrap_or_else(|| v - 1.5 * v.atan() + 0.5 * v / (1.0 + v * v))
            }
        };
        let scale = match self.shape {
            SpectrumShape::Lorentzian => 2.0,
            SpectrumShape::LorentzianSquared => 4.0,
        };
        scale * s2 * tc * tc * g
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut bad = |k: &str, m: &str| out.push((k.to_string(), m.to_string()));
        if !(self.ou_sigma.is_finite() && self.ou_sigma >= 0.0) {
            bad("noise.sigma_mhz", "must be finite and >= 0");
        }
        if !(self.ou_tau_c.is_finite() && self.ou_tau_c > 0.0) {
            bad("noise.tau_c_us", "must be finite and > 0");
        }
        if !(self.t1_electron > 0.0) {
            bad("noise.t1_electron_us", "must be > 0");
        }
        if !(self.t1_nuclear > 0.0) {
            bad("noise.t1_nuclear_us", "must be > 0");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((key, message)) => Err(SpinLabError::Config { key, message }),
        }
    }

    /// Exact discretization of the process on a `dt` grid, stationary start.
    pub fn sampler(&self, dt: f64) -> Result<NoiseSampler> {
        if !(dt > 0.0) || dt >= self.ou_tau_c / 10.0 {
            return Err(SpinLabError::StepSize { dt, limit: self.ou_tau_c / 10.0 });
        }
        let a = (-dt / self.ou_tau_c).exp();
        let h = dt / self.ou_tau_c;
        // Cascaded stage: u1 -> u2, both unit-rate; stationary covariance
        // [[1, 1/2], [1/2, 1/2]] for unit-variance u1. Output b = sigma sqrt2 u2.
        let f = [[a, 0.0], [h * a, a]];
        let p = [[1.0, 0.5], [0.5, 0.5]];
        let fp = mat2_mul(&f, &p);
        let fpft = mat2_mul(&fp, &[[f[0][0], f[1][0]], [f[0][1], f[1][1]]]);
        let q = [[p[0][0] - fpft[0][0], p[0][1] - fpft[0][1]], [p[1][0] - fpft[1][0], p[1][1] - fpft[1][1]]];
        Ok(NoiseSampler {
            shape: self.shape,
            sigma: self.ou_sigma,
            tau_c: self.ou_tau_c,
            decay: a,
            innovation: (1.0 - a * a).sqrt(),
            f,
            chol_q: chol2(&q),
            chol_p: chol2(&p),
            state: [0.0; 2],
            started: false,
        })
    }
}

fn mat2_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn chol2(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let l00 = m[0][0].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { m[1][0] / l00 } else { 0.0 };
    let l11 = (m[1][1] - l10 * l10).max(0.0).sqrt();
    [[l00, 0.0], [l10, l11]]
}

/// Stateful generator of a detuning trajectory on a fixed grid.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    shape: SpectrumShape,
    sigma: f64,
    tau_c: f64,
    decay: f64,
    innovation: f64,
    f: [[f64; 2]; 2],
    chol_q: [[f64; 2]; 2],
    chol_p: [[f64; 2]; 2],
    state: [f64; 2],
    started: bool,
}

impl NoiseSampler {
    /// The same process state on a different grid step.
    pub fn retimed(&self, dt: f64) -> Result<Self> {
        let model = NoiseModel { ou_sigma: self.sigma, ou_tau_c: self.tau_c, shape: self.shape, ..NoiseModel::default() };
        let mut out = model.sampler(dt)?;
        out.state = self.state;
        out.started = self.started;
        Ok(out)
    }

    /// Draws a fresh stationary state, forgetting the past.
    pub fn restart(&mut self, rng: &mut impl rand::Rng) {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        self.state = match self.shape {
            SpectrumShape::Lorentzian => [z0, 0.0],
            SpectrumShape::LorentzianSquared => {
                let l = &self.chol_p;
                [l[0][0] * z0, l[1][0] * z0 + l[1][1] * z1]
            }
        };
        self.started = true;
    }

    /// Current detuning in MHz.
    pub fn value(&self) -> f64 {
        match self.shape {
            SpectrumShape::Lorentzian => self.sigma * self.state[0],
            SpectrumShape::LorentzianSquared => self.sigma * 2f64.sqrt() * self.state[1],
        }
    }

    /// Advances one grid step and returns the new detuning.
    pub fn step(&mut self, rng: &mut impl rand::Rng) -> f64 {
        if !self.started {
            self.restart(rng);
        }
        let z0: f64 = StandardNormal.sample(rng);
        match self.shape {
            SpectrumShape::Lorentzian => {
                self.state[0] = self.state[0] * self.decay + self.innovation * z0;
            }
            SpectrumShape::LorentzianSquared => {
                let z1: f64 = StandardNormal.sample(rng);
                let [x0, x1] = self.state;
                let f = &self.f;
                let l = &self.chol_q;
                self.state = [
                    f[0][0] * x0 + l[0][0] * z0,
                    f[1][0] * x0 + f[1][1] * x1 + l[1][0] * z0 + l[1][1] * z1,
                ];
            }
        }
        self.value()
    }
}

/// Detuning trajectory (MHz) on `floor(duration / dt) + 1` grid points.
pub fn sample_ou(model: &NoiseModel, duration: f64, dt: f64, seed: u64) -> Result<Vec<f64>> {
    let mut sampler = model.sampler(dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration / dt).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    sampler.restart(&mut rng);
    out.push(sampler.value());
    for _ in 1..n {
        out.push(sampler.step(&mut rng));
    }
    Ok(out)
}

/// Ensemble coherence factor `exp(-(2 pi)^2 / 2 * int int C)` for a constant
/// filter over `duration`, i.e. free-induction decay of a superposition.
pub fn free_decay(model: &NoiseModel, duration: f64) -> f64 {
    let x = duration.abs();
    let tc = model.ou_tau_c;
    let s2 = model.ou_sigma * model.ou_sigma;
    let e = (-x / tc).exp();
    let k = match model.shape {
        SpectrumShape::Lorentzian => s2 * tc * (x - tc * (1.0 - e)),
        SpectrumShape::LorentzianSquared => s2 * tc * (2.0 * x - 3.0 * tc + 3.0 * tc * e + x * e),
    };
    // int_0^x int_0^x C = 2 K(x)
    (-0.5 * (TAU * TAU) * 2.0 * k).exp()
}

/// `sum_{k>=1} c_k v^(2k+1)` for small `v`, `None` where the series is slow.
fn odd_series(v: f64, c: impl Fn(i32) -> f64) -> Option<f64> {
    if v > 0.1 {
        return None;
    }
    let v2 = v * v;
    let mut p = v * v2;
    let mut acc = 0.0;
    for k in 1..=10 {
        acc += c(k) * p;
        p *= v2;
    }
    Some(acc)
}
