//! Gaussian-noise decoherence functional of a pulse sequence.
//!
//! For a switching function `y(t) = +-1` the accrued phase is
//! `phi = 2 pi int y b dt` and the ensemble coherence is `exp(-chi)` with
//!
//! `chi = 2 pi int_0^inf S(w) |F(w)|^2 / w^2 dw`
//!
//! where `S` is the two-sided spectral density of `b` (MHz^2 us) and `F` the
//! filter function of the sequence.

use std::f64::consts::PI;

use num_complex::Complex;
use rayon::prelude::*;

use super::model::NoiseModel;
use crate::error::{Result, SpinLabError};

/// Relative accuracy target of the frequency quadrature.
pub const QUADRATURE_RTOL: f64 = 1e-6;

/// Absolute accuracy floor on `chi`; below it `exp(-chi)` is exact to
/// double precision anyway (e.g. an echo under quasi-static noise).
pub const QUADRATURE_ATOL: f64 = 1e-14;

/// Instantaneous pi pulses at fractional positions of a sequence of length `total`.
#[derive(Clone, Debug)]
pub enum PulseTimes {
    /// `n` equally spaced pulses at `(j - 1/2) total / n`.
    Cpmg(usize),
    /// Arbitrary pulse times in us, ascending, inside `(0, total)`.
    Explicit(Vec<f64>),
    /// Piecewise sensitivity function of a sequence with finite pulses.
    Shaped(Vec<Piece>),
}

/// One piece of a sensitivity function `y(t)` on `[start, start + width]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Piece {
    /// `y = sign`.
    Flat { start: f64, width: f64, sign: f64 },
    /// `y = amplitude cos(rate (t - start) + phase)`, e.g. the rotation of the
    /// coherence during a finite pulse.
    Ramp { start: f64, width: f64, rate: f64, phase: f64, amplitude: f64 },
}

impl Piece {
    fn response(&self, omega: f64) -> Complex<f64> {
        match *self {
            Piece::Flat { start, width, sign } => segment(omega, start, start + width) * sign,
            Piece::Ramp { start, width, rate, phase, amplitude } => {
                // cos(x) = (e^{ix} + e^{-ix}) / 2 with x = rate (t - a) + phase
                let lead = Complex::from_polar(1.0, omega * start);
                let plus = Complex::from_polar(1.0, phase) * segment(omega + rate, 0.0, width);
                let minus = Complex::from_polar(1.0, -phase) * segment(omega - rate, 0.0, width);
                lead * (plus + minus) * (0.5 * amplitude)
            }
        }
    }
}

/// Sensitivity function of `pi/2 - (tau - pi - tau)^n - pi/2` with pulses of
/// finite length, starting at `t = 0` with the first `pi/2` pulse.
///
/// During a pulse the coherence rotates, so `y` follows `sin` over the first
/// `pi/2`, `cos` over each `pi` and the last `pi/2`.
pub fn cpmg_sensitivity(n: usize, tau: f64, t_pi2: f64, t_pi: f64) -> (PulseTimes, f64) {
    use std::f64::consts::FRAC_PI_2;
    let mut pieces = Vec::with_capacity(3 * n + 2);
    let mut t = 0.0;
    if t_pi2 > 0.0 {
        pieces.push(Piece::Ramp { start: t, width: t_pi2, rate: FRAC_PI_2 / t_pi2, phase: -FRAC_PI_2, amplitude: 1.0 });
    }
    t += t_pi2;
    let mut sign = 1.0;
    for _ in 0..n {
        pieces.push(Piece::Flat { start: t, width: tau, sign });
        t += tau;
        if t_pi > 0.0 {
            pieces.push(Piece::Ramp { start: t, width: t_pi, rate: PI / t_pi, phase: 0.0, amplitude: sign });
        }
        t += t_pi;
        sign = -sign;
        pieces.push(Piece::Flat { start: t, width: tau, sign });
        t += tau;
    }
    if t_pi2 > 0.0 {
        pieces.push(Piece::Ramp { start: t, width: t_pi2, rate: FRAC_PI_2 / t_pi2, phase: 0.0, amplitude: sign });
    }
    t += t_pi2;
    (PulseTimes::Shaped(pieces), t)
}

/// The second transverse component of the same sequence: while a `pi` pulse
/// about `x` turns the coherence, part of the detuning acts along `y`, with
/// `sin` weight and the sign of the surrounding free periods. The `pi/2`
/// pulses only add a component along the initial state, which does not
/// dephase it. Empty for instantaneous pulses.
pub fn cpmg_transverse_sensitivity(n: usize, tau: f64, t_pi2: f64, t_pi: f64) -> PulseTimes {
    let mut pieces = Vec::with_capacity(n);
    if t_pi > 0.0 {
        let mut sign = 1.0;
        for j in 0..n {
            let start = t_pi2 + tau + j as f64 * (2.0 * tau + t_pi);
            pieces.push(Piece::Ramp { start, width: t_pi, rate: PI / t_pi, phase: -0.5 * PI, amplitude: sign });
            sign = -sign;
        }
    }
    PulseTimes::Shaped(pieces)
}

impl PulseTimes {
    fn count(&self) -> usize {
        match self {
            Self::Cpmg(n) => *n,
            Self::Explicit(t) => t.len(),
            Self::Shaped(p) => p.iter().filter(|x| matches!(x, Piece::Ramp { .. })).count(),
        }
    }

    /// `Y(w) = int_0^total y(t) e^{i w t} dt`, so that `|F(w)|^2 = w^2 |Y(w)|^2`.
    ///
    /// Summed segment by segment, which stays accurate as `w -> 0` where the
    /// usual `F / w` form cancels catastrophically.
    pub fn response(&self, omega: f64, total: f64) -> Complex<f64> {
        match self {
            Self::Cpmg(n) => {
                let n = *n;
                let dx = total / n as f64;
                let sign_last = if n % 2 == 0 { 1.0 } else { -1.0 };
                let edges = segment(omega, 0.0, 0.5 * dx) + segment(omega, total - 0.5 * dx, total) * sign_last;
                if n == 1 {
                    return edges;
                }
                // middle segments m = 1..n-1 centred on m dx with sign (-1)^m
                let q = Complex::from_polar(1.0, omega * dx);
                let one_plus_q = Complex::new(1.0, 0.0) + q;
                let g = if one_plus_q.norm() > 1e-6 {
                    let mq = -q;
                    mq * (Complex::new(1.0, 0.0) - mq.powu((n - 1) as u32)) / one_plus_q
                } else {
                    let mq = -q;
                    (1..n).fold((Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)), |(acc, p), _| {
                        let p = p * mq;
                        (acc + p, p)
                    })
                    .0
                };
                edges + g * (dx * sinc(0.5 * omega * dx))
            }
            Self::Explicit(t) => {
                let mut acc = Complex::new(0.0, 0.0);
                let mut sign = 1.0;
                let mut start = 0.0;
                for &b in t.iter().chain(std::iter::once(&total)) {
                    acc += segment(omega, start, b) * sign;
                    start = b;
                    sign = -sign;
                }
                acc
            }
            Self::Shaped(pieces) => pieces.iter().map(|p| p.response(omega)).sum(),
        }
    }

    /// `|F(w)|^2`.
    pub fn filter(&self, omega: f64, total: f64) -> f64 {
        omega * omega * self.response(omega, total).norm_sqr()
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `int_a^b e^{i w t} dt`.
fn segment(omega: f64, a: f64, b: f64) -> Complex<f64> {
    Complex::from_polar((b - a) * sinc(0.5 * omega * (b - a)), 0.5 * omega * (a + b))
}

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate and its error, floored at the round-off level of the
/// integrand magnitude.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for i in 0..7 {
        let dx = h * XGK[i];
        let (f1, f2) = (f(c - dx), f(c + dx));
        k += WGK[i] * (f1 + f2);
        abs += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    let err = ((k - g) * h).abs();
    let roundoff = 50.0 * f64::EPSILON * abs * h.abs();
    (k * h, if err <= roundoff { 0.0 } else { err })
}

/// Recursive bisection; returns the estimate and its residual error bound.
fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
    let (v, e) = gk15(f, a, b);
    if e <= tol || depth == 0 {
        return (v, e);
    }
    let m = 0.5 * (a + b);
    let (l, el) = adaptive(f, a, m, 0.5 * tol, depth - 1);
    let (r, er) = adaptive(f, m, b, 0.5 * tol, depth - 1);
    (l + r, el + er)
}

/// Decoherence functional `chi` for pulses `pulses` over a sequence of length `total` (us).
pub fn decoherence_functional(pulses: &PulseTimes, total: f64, model: &NoiseModel) -> Result<f64> {
    if model.ou_sigma == 0.0 || total <= 0.0 {
        return Ok(0.0);
    }
    let n = pulses.count().max(1) as f64;
    let peak = PI * n / total;
    let w_max = 60.0 * peak.max(1.0 / model.ou_tau_c);
    let width = PI / total;
    let pieces = (w_max / width).ceil() as usize;
    let integrand = |w: f64| model.spectral_density(w) * pulses.response(w, total).norm_sqr();

    let coarse: Vec<(f64, f64, f64, f64)> = (0..pieces)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k as f64 * width, (k + 1) as f64 * width);
            let (v, e) = gk15(&integrand, a, b);
            (a, b, v, e)
        })
        .collect();
    let sum: f64 = coarse.iter().map(|c| c.2).sum();
    // Beyond w_max the filter oscillates fast enough to be replaced by its mean, 2 + 4n.
    let w_end = pieces as f64 * width;
    let tail = (2.0 + 4.0 * pulses.count() as f64) * model.tail_integral(w_end);
    let allowed = |scale: f64| (QUADRATURE_RTOL * scale.abs()).max(QUADRATURE_ATOL / (2.0 * PI));
    let piece_tol = 0.1 * allowed(sum + tail) / pieces as f64;

    let refined: Vec<(f64, f64)> = coarse
        .into_par_iter()
        .map(|(a, b, v, e)| if e <= piece_tol { (v, e) } else { adaptive(&integrand, a, b, piece_tol, 20) })
        .collect();
    // sequential reduction keeps the result independent of the thread count
    let (mut total_int, mut total_err) = (0.0, 0.0);
    for (v, e) in refined {
        total_int += v;
        total_err += e;
    }
    let chi = 2.0 * PI * (total_int + tail);
    if !chi.is_finite() {
        return Err(SpinLabError::Numeric("decoherence functional is not finite".into()));
    }
    if total_err > allowed(total_int + tail) {
        return Err(SpinLabError::Numeric(format!(
            "filter quadrature error {total_err:.3e} exceeds the relative tolerance"
        )));
    }
    Ok(chi)
}

/// Ensemble CPMG coherence `exp(-chi)` for `n_pulses` with free time `tau`
/// before the first and after the last pulse, `2 tau` between pulses
/// (sequence length `2 n tau`, instantaneous pulses).
pub fn cpmg_coherence_analytic(n_pulses: usize, tau: f64, model: &NoiseModel) -> Result<f64> {
    if n_pulses == 0 {
        return Err(SpinLabError::Domain("CPMG needs at least one pulse".into()));
    }
    let chi = decoherence_functional(&PulseTimes::Cpmg(n_pulses), 2.0 * n_pulses as f64 * tau, model)?;
    Ok((-chi).exp())
}

/// Sequence length (us) at which CPMG-`n` coherence falls to `1/e`.
///
/// `ln chi` is close to linear in `ln T`, so a safeguarded regula falsi in
/// log-log coordinates converges in a handful of quadratures.
pub fn cpmg_t2_analytic(n_pulses: usize, model: &NoiseModel) -> Result<f64> {
    if model.ou_sigma == 0.0 {
        return Err(SpinLabError::Numeric("no dephasing: T2 is unbounded".into()));
    }
    let g = |ln_t: f64| -> Result<f64> {
        Ok(decoherence_functional(&PulseTimes::Cpmg(n_pulses), ln_t.exp(), model)?.ln())
    };
    // quasi-static estimate as the starting bracket centre
    let guess = (1.0 / (std::f64::consts::TAU * model.ou_sigma)).ln() + (n_pulses as f64).ln() * 0.7;
    let (mut a, mut b) = (guess - 1.0, guess + 1.0);
    let (mut ga, mut gb) = (g(a)?, g(b)?);
    let mut expand = 0;
    while ga > 0.0 {
        a -= 2.0;
        ga = g(a)?;
        expand += 1;
        if expand > 40 {
            return Err(SpinLabError::Numeric("T2 bracket search failed".into()));
        }
    }
    while gb < 0.0 {
        b += 2.0;
        gb = g(b)?;
        expand += 1;
        if expand > 40 || b > 17.0 {
            return Err(SpinLabError::Numeric("T2 bracket search failed".into()));
        }
    }
    let mut side = 0i8;
    for _ in 0..100 {
        let c = (a * gb - b * ga) / (gb - ga);
        let gc = g(c)?;
        if gc.abs() < 1e-12 || (b - a) < 1e-12 {
            return Ok(c.exp());
        }
        if gc * gb > 0.0 {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        }
    }
    Ok(((a * gb - b * ga) / (gb - ga)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpmg_closed_form_matches_direct_sum() {
        let total = 3.7;
        for n in [1usize, 2, 5, 16] {
            let times: Vec<f64> = (1..=n).map(|j| (j as f64 - 0.5) * total / n as f64).collect();
            for w in [0.1, 1.3, 7.7, PI * n as f64 / total, 40.0] {
                let a = PulseTimes::Cpmg(n).filter(w, total);
                let b = PulseTimes::Explicit(times.clone()).filter(w, total);
                assert!((a - b).abs() < 1e-9 * b.max(1.0), "n={n} w={w}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_sigma_gives_unit_coherence() {
        let m = NoiseModel { ou_sigma: 0.0, ..Default::default() };
        assert_eq!(cpmg_coherence_analytic(4, 0.1, &m).unwrap(), 1.0);
    }
}
