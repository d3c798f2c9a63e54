use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Result, SpinLabError};

/// Zero-padding factor applied before the transform, so that peak and width
/// interpolation see several points across the main lobe.
const PAD: usize = 16;

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    /// Frequencies in inverse x units (MHz for x in us).
    pub frequencies: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub peak_frequency: f64,
    /// Full width at half maximum of the power spectrum `|X(f)|^2`.
    pub fwhm: f64,
    /// `(peak - mean) / std` of the magnitude on the native (unpadded) grid.
    pub peak_significance: f64,
}

fn check_uniform(t: &[f64]) -> Result<f64> {
    if t.len() < 4 {
        return Err(SpinLabError::Sampling(format!("need at least 4 samples, got {}", t.len())));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(SpinLabError::Sampling("axis must be increasing".into()));
    }
    for (k, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(SpinLabError::Sampling(format!("step {k} is {} but the mean step is {dt}", w[1] - w[0])));
        }
    }
    Ok(dt)
}

/// Hann-windowed Fourier magnitude of the mean-subtracted signal, with
/// parabolic peak interpolation and linear FWHM interpolation.
pub fn spectrum_and_linewidth(t: &[f64], p: &[f64]) -> Result<SpectrumResult> {
    if t.len() != p.len() {
        return Err(SpinLabError::Sampling("axis and values differ in length".into()));
    }
    let dt = check_uniform(t)?;
    let n = t.len();
    let mean = p.iter().sum::<f64>() / n as f64;
    let m = (n * PAD).next_power_of_two();
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    for k in 0..n {
        let w = 0.5 - 0.5 * (TAU * k as f64 / (n - 1) as f64).cos();
        buf[k] = Complex::new((p[k] - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2 + 1;
    let df = 1.0 / (m as f64 * dt);
    let frequencies: Vec<f64> = (0..half).map(|k| k as f64 * df).collect();
    let magnitude: Vec<f64> = buf[..half].iter().map(|z| z.norm()).collect();
    let power: Vec<f64> = magnitude.iter().map(|v| v * v).collect();

    let k0 = (1..half).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap_or(0);
    let peak_frequency = if k0 > 0 && k0 + 1 < half {
        let (a, b, c) = (magnitude[k0 - 1], magnitude[k0], magnitude[k0 + 1]);
        let den = a - 2.0 * b + c;
        let d = if den.abs() > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
        (k0 as f64 + d.clamp(-0.5, 0.5)) * df
    } else {
        k0 as f64 * df
    };

    let hm = 0.5 * power[k0];
    let mut lo = 0.0;
    let mut k = k0;
    while k > 0 && power[k] > hm {
        k -= 1;
    }
    if power[k] <= hm {
        lo = (k as f64 + (hm - power[k]) / (power[k + 1] - power[k])) * df;
    }
    let mut k = k0;
    while k + 1 < half && power[k] > hm {
        k += 1;
    }
    let hi = if power[k] <= hm {
        (k as f64 - (hm - power[k]) / (power[k - 1] - power[k])) * df
    } else {
        k as f64 * df
    };

    let native: Vec<f64> = (1..n / 2).map(|j| magnitude[j * m / n]).collect();
    let nm = native.len().max(1) as f64;
    let mu = native.iter().sum::<f64>() / nm;
    let sd = (native.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / nm).sqrt();
    let peak_native = native.iter().copied().fold(0.0, f64::max);
    let peak_significance = if sd > 0.0 { (peak_native - mu) / sd } else { 0.0 };

    Ok(SpectrumResult { frequencies, magnitude, peak_frequency, fwhm: hi - lo, peak_significance })
}

/// Frequency, amplitude and phase of the strongest sinusoid in `y(x)`, from an
/// oversampled discrete Fourier sum that tolerates non-uniform `x`.
pub fn dft_peak(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len();
    let span = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min);
    if n < 2 || span <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let f_max = 0.5 * (n - 1) as f64 / span;
    let df = 1.0 / (8.0 * span);
    let steps = (f_max / df).ceil() as usize;
    let eval = |f: f64| -> Complex<f64> {
        x.iter().zip(y).fold(Complex::new(0.0, 0.0), |acc, (&t, &v)| acc + Complex::from_polar(v, -TAU * f * t))
    };
    let mut best = (0.0, 0.0);
    for k in 1..=steps {
        let f = k as f64 * df;
        let p = eval(f).norm_sqr();
        if p > best.1 {
            best = (f, p);
        }
    }
    let f = golden_refine(|f| -eval(f).norm_sqr(), (best.0 - df).max(0.0), best.0 + df);
    let z = eval(f);
    (f, 2.0 * z.norm() / n as f64, z.arg())
}

fn golden_refine(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..60 {
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}
