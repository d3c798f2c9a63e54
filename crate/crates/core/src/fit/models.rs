use std::f64::consts::TAU;
use std::fmt;

use nalgebra::DMatrix;

use super::lm::{levenberg_marquardt, Bounds, LmOptions, LmOutcome};
use super::spectrum::dft_peak;
use crate::error::{Result, SpinLabError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// `A cos(2 pi f x + phi) exp(-x / tau) + c`
    DampedCosine,
    /// `A exp(-(x / T2)^n) + c`
    StretchedExponential,
    /// `a N^beta`
    PowerLaw,
}

#[derive(Clone, Debug)]
pub struct FitParameter {
    pub name: &'static str,
    pub unit: &'static str,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<FitParameter>,
    pub residual_norm: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Names of parameters that ended on a constraint boundary.
    pub at_bound: Vec<&'static str>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> f64 {
        self.param(name).value
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.param(name).sigma
    }

    fn param(&self, name: &str) -> &FitParameter {
        self.params.iter().find(|p| p.name == name).unwrap_or_else(|| panic!("no parameter `{name}`"))
    }

    /// The fitted model at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let v = |n| self.value(n);
        match self.model {
            FitModel::DampedCosine => {
                let decay = if v("tau").is_finite() { (-x / v("tau")).exp() } else { 1.0 };
                v("amplitude") * (TAU * v("frequency") * x + v("phase")).cos() * decay + v("offset")
            }
            FitModel::StretchedExponential => {
                v("amplitude") * (-(x / v("t2")).powf(v("exponent"))).exp() + v("offset")
            }
            FitModel::PowerLaw => v("prefactor") * x.powf(v("beta")),
        }
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(f, "{} = {:.6e} +/- {:.3e} {}", p.name, p.value, p.sigma, p.unit)?;
        }
        write!(
            f,
            "residual_norm = {:.6e}, converged = {}, iterations = {}",
            self.residual_norm, self.converged, self.iterations
        )?;
        if !self.at_bound.is_empty() {
            write!(f, ", at_bound = {}", self.at_bound.join("|"))?;
        }
        Ok(())
    }
}

fn check_input(x: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(SpinLabError::Fit(format!("length mismatch: {} x vs {} y", x.len(), y.len())));
    }
    if x.len() < min_points {
        return Err(SpinLabError::Fit(format!("need at least {min_points} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(SpinLabError::Fit("non-finite data".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    if var <= 1e-28 * mean.abs().max(1.0).powi(2) {
        return Err(SpinLabError::Fit("data has zero variance".into()));
    }
    Ok(())
}

/// Residual variance times `(J^T J)^-1`, square-rooted on the diagonal.
fn sigmas(out: &LmOutcome, n_points: usize) -> Vec<f64> {
    let dof = n_points.saturating_sub(out.params.len()).max(1) as f64;
    let s2 = 2.0 * out.cost / dof;
    (0..out.params.len()).map(|i| (s2 * out.jtj_inverse[(i, i)]).max(0.0).sqrt()).collect()
}

/// Fits `A cos(2 pi f x + phi) exp(-x / tau) + c`.
///
/// Initial frequency from the Fourier peak of the mean-subtracted data unless
/// `guess = [A, f, phi, tau, c]` is given.
pub fn fit_damped_cosine(x: &[f64], y: &[f64], guess: Option<[f64; 5]>) -> Result<FitResult> {
    check_input(x, y, 8)?;
    let n = x.len() as f64;
    let x_min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = x_max - x_min;
    // Fit about the window start; the phase is referred back to x = 0 at the end.
    let x0 = x_min;
    let xs: Vec<f64> = x.iter().map(|v| v - x0).collect();

    let p0 = match guess {
        Some([a, f, phi, tau, c]) => {
            let rate = if tau.is_finite() && tau > 0.0 { 1.0 / tau } else { 0.0 };
            [a * (-x0 * rate).exp(), f, phi + TAU * f * x0, rate, c]
        }
        None => {
            let c = y.iter().sum::<f64>() / n;
            let centered: Vec<f64> = y.iter().map(|v| v - c).collect();
            let (f, amp, phase) = dft_peak(&xs, &centered);
            [amp, f, phase, 0.5 / span, c]
        }
    };

    let residual = |p: &[f64]| -> Vec<f64> {
        xs.iter()
            .zip(y)
            .map(|(&t, &yv)| p[0] * (TAU * p[1] * t + p[2]).cos() * (-p[3] * t).exp() + p[4] - yv)
            .collect()
    };
    let jac = |p: &[f64]| -> DMatrix<f64> {
        let mut j = DMatrix::zeros(xs.len(), 5);
        for (i, &t) in xs.iter().enumerate() {
            let arg = TAU * p[1] * t + p[2];
            let e = (-p[3] * t).exp();
            let (s, c) = arg.sin_cos();
            j[(i, 0)] = c * e;
            j[(i, 1)] = -p[0] * s * e * TAU * t;
            j[(i, 2)] = -p[0] * s * e;
            j[(i, 3)] = -p[0] * c * e * t;
            j[(i, 4)] = 1.0;
        }
        j
    };
    let bounds = Bounds {
        lower: vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY],
        upper: vec![f64::INFINITY; 5],
    };
    let out = levenberg_marquardt(residual, jac, &p0, &bounds, &LmOptions::default())?;
    let sig = sigmas(&out, x.len());
    let [mut a, f, phi_s, rate, c] = [out.params[0], out.params[1], out.params[2], out.params[3], out.params[4]];
    let mut phi = phi_s - TAU * f * x0;
    let mut sa = sig[0];
    a *= (rate * x0).exp();
    sa *= (rate * x0).exp();
    if a < 0.0 {
        a = -a;
        phi += std::f64::consts::PI;
    }
    phi = phi.rem_euclid(TAU);
    let (tau, s_tau) = if rate > 0.0 { (1.0 / rate, sig[3] / (rate * rate)) } else { (f64::INFINITY, f64::INFINITY) };
    let p = |name, unit, value, sigma| FitParameter { name, unit, value, sigma };
    let at_bound = if out.at_bound[1] { vec!["frequency"] } else { vec![] };
    Ok(FitResult {
        model: FitModel::DampedCosine,
        params: vec![
            p("amplitude", "", a, sa),
            p("frequency", "1/x", f, sig[1]),
            p("phase", "rad", phi, sig[2]),
            p("tau", "x", tau, s_tau),
            p("offset", "", c, sig[4]),
        ],
        residual_norm: (2.0 * out.cost).sqrt(),
        gradient_norm: out.gradient_norm,
        converged: out.converged,
        iterations: out.iterations,
        at_bound,
    })
}

pub const STRETCH_BOUNDS: (f64, f64) = (0.5, 4.0);

/// Fits `A exp(-(x / T2)^n) + c` with `n` confined to [0.5, 4].
pub fn fit_stretched_exponential(x: &[f64], y: &[f64]) -> Result<FitResult> {
    stretched(x, y, None)
}

/// As [`fit_stretched_exponential`] with the offset held at `c`.
pub fn fit_stretched_exponential_fixed_offset(x: &[f64], y: &[f64], c: f64) -> Result<FitResult> {
    stretched(x, y, Some(c))
}

fn stretched(x: &[f64], y: &[f64], fixed_c: Option<f64>) -> Result<FitResult> {
    check_input(x, y, if fixed_c.is_some() { 4 } else { 5 })?;
    if x.iter().any(|&v| v < 0.0) {
        return Err(SpinLabError::Fit("stretched exponential needs x >= 0".into()));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let y_first = y[order[0]];
    let tail = &order[order.len() - (order.len() / 8).max(1)..];
    let y_tail = tail.iter().map(|&i| y[i]).sum::<f64>() / tail.len() as f64;
    let c0 = fixed_c.unwrap_or(y_tail.min(y_first));
    let a0 = (y_first - c0).abs().max(1e-12) * (y_first - c0).signum();
    let a0 = if a0 == 0.0 { 1.0 } else { a0 };
    // Time at which the signal has fallen to 1/e of its span.
    let target = c0 + a0 / std::f64::consts::E;
    let t0 = order
        .iter()
        .find(|&&i| (y[i] - target) * a0.signum() <= 0.0)
        .map(|&i| x[i])
        .unwrap_or_else(|| x[order[order.len() - 1]])
        .max(1e-12);

    // Parameterized by ln T2 to keep T2 positive.
    let n_free = if fixed_c.is_some() { 3 } else { 4 };
    let unpack = |p: &[f64]| (p[0], p[1].exp(), p[2], fixed_c.unwrap_or_else(|| p[3]));
    let residual = |p: &[f64]| -> Vec<f64> {
        let (a, t2, n, c) = unpack(p);
        x.iter().zip(y).map(|(&t, &yv)| a * (-(t / t2).powf(n)).exp() + c - yv).collect()
    };
    let jac = |p: &[f64]| -> DMatrix<f64> {
        let (a, t2, n, _) = unpack(p);
        let mut j = DMatrix::zeros(x.len(), n_free);
        for (i, &t) in x.iter().enumerate() {
            let u = t / t2;
            let un = if u > 0.0 { u.powf(n) } else { 0.0 };
            let e = (-un).exp();
            j[(i, 0)] = e;
            j[(i, 1)] = a * e * un * n;
            j[(i, 2)] = if u > 0.0 { -a * e * un * u.ln() } else { 0.0 };
            if n_free == 4 {
                j[(i, 3)] = 1.0;
            }
        }
        j
    };
    let mut p0 = vec![a0, t0.ln(), 2.0];
    let mut lower = vec![f64::NEG_INFINITY, f64::NEG_INFINITY, STRETCH_BOUNDS.0];
    let mut upper = vec![f64::INFINITY, f64::INFINITY, STRETCH_BOUNDS.1];
    if fixed_c.is_none() {
        p0.push(c0);
        lower.push(f64::NEG_INFINITY);
        upper.push(f64::INFINITY);
    }
    let out = levenberg_marquardt(residual, jac, &p0, &Bounds { lower, upper }, &LmOptions::default())?;
    let sig = sigmas(&out, x.len());
    let t2 = out.params[1].exp();
    let p = |name, unit, value, sigma| FitParameter { name, unit, value, sigma };
    let mut params = vec![
        p("amplitude", "", out.params[0], sig[0]),
        p("t2", "x", t2, t2 * sig[1]),
        p("exponent", "", out.params[2], sig[2]),
    ];
    params.push(match fixed_c {
        Some(c) => p("offset", "", c, 0.0),
        None => p("offset", "", out.params[3], sig[3]),
    });
    Ok(FitResult {
        model: FitModel::StretchedExponential,
        params,
        residual_norm: (2.0 * out.cost).sqrt(),
        gradient_norm: out.gradient_norm,
        converged: out.converged,
        iterations: out.iterations,
        at_bound: if out.at_bound[2] { vec!["exponent"] } else { vec![] },
    })
}

/// `T2 = a N^beta` by ordinary least squares on `(ln N, ln T2)`.
pub fn fit_power_law(n: &[f64], t2: &[f64]) -> Result<FitResult> {
    if n.len() != t2.len() || n.len() < 3 {
        return Err(SpinLabError::Fit("power law needs at least 3 paired points".into()));
    }
    if n.iter().chain(t2).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(SpinLabError::Fit("power law needs finite positive data".into()));
    }
    let lx: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = t2.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(SpinLabError::Fit("power law needs distinct N".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let beta = sxy / sxx;
    let ln_a = my - beta * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - ln_a - beta * a).powi(2)).sum();
    let s2 = ssr / (m - 2.0);
    let s_beta = (s2 / sxx).sqrt();
    let s_ln_a = (s2 * (1.0 / m + mx * mx / sxx)).sqrt();
    let a = ln_a.exp();
    Ok(FitResult {
        model: FitModel::PowerLaw,
        params: vec![
            FitParameter { name: "prefactor", unit: "T2", value: a, sigma: a * s_ln_a },
            FitParameter { name: "beta", unit: "", value: beta, sigma: s_beta },
        ],
        residual_norm: ssr.sqrt(),
        gradient_norm: 0.0,
        converged: true,
        iterations: 1,
        at_bound: vec![],
    })
}
