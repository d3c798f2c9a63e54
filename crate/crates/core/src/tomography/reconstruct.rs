use std::fmt::Write as _;

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason, TerminationStatus};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use super::settings::{measurement_matrix, TomogramData};
use crate::error::{Result, SpinLabError};
use crate::linalg::{eigh, Mat4};
use crate::noise::ReadoutModel;
use crate::spin::{fidelity, from_pauli, DensityMatrix};

/// Linear-inversion estimate; Hermitian and trace one but possibly not positive.
#[derive(Clone, Debug)]
pub struct UnconstrainedEstimate {
    pub matrix: Mat4<f64>,
    /// `<sigma_e (x) sigma_n>` at `4 e + n`.
    pub correlators: [f64; 16],
    pub min_eigenvalue: f64,
}

impl UnconstrainedEstimate {
    pub fn is_physical(&self) -> bool {
        self.min_eigenvalue >= -1e-12 && self.correlators.iter().all(|c| c.abs() <= 1.0 + 1e-12)
    }
}

/// Correlators by least squares on the per-setting populations, with the
/// identity component pinned to one.
pub fn linear_inversion(data: &TomogramData, readout: &ReadoutModel<f64>) -> Result<UnconstrainedEstimate> {
    data.validate()?;
    let p = data.populations(readout);
    let a = measurement_matrix(&data.povms);
    let rhs = DVector::from_iterator(p.len(), p.iter().enumerate().map(|(k, v)| v - a[(k, 0)]));
    let reduced = a.columns(1, 15).into_owned();
    let svd = reduced.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| SpinLabError::Tomography(format!("inversion failed: {e}")))?;
    let mut correlators = [0.0; 16];
    correlators[0] = 1.0;
    for m in 1..16 {
        correlators[m] = sol[m - 1];
    }
    Ok(estimate_from(correlators))
}

/// Overrides a computed correlator set, e.g. to build corrupted test inputs.
pub fn estimate_from(correlators: [f64; 16]) -> UnconstrainedEstimate {
    let matrix = from_pauli(&correlators).hermitian_part();
    let min_eigenvalue = eigh(&matrix).min_value();
    UnconstrainedEstimate { matrix, correlators, min_eigenvalue }
}

/// Closest physical state in Frobenius norm: eigenvalues projected onto the simplex.
pub fn project_to_physical(m: &Mat4<f64>) -> DensityMatrix<f64> {
    let eig = eigh(&m.hermitian_part());
    let mut sorted = eig.values;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut shift = 0.0;
    let mut acc = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            shift = t;
        }
    }
    let out = eig.map(|l| Complex::new((l - shift).max(0.0), 0.0));
    DensityMatrix::from_matrix_unchecked(out.hermitian_part())
}

/// Poisson negative log-likelihood per shot (up to a data-only constant), over the
/// lower-triangular factor `T` of `rho = T^dagger T / Tr`.
#[derive(Clone)]
struct Likelihood<'a> {
    povms: &'a [Mat4<f64>],
    signal: &'a [f64],
    /// Expected bright counts per setting.
    bright: Vec<f64>,
    contrast: f64,
    norm: f64,
}

/// Positions of the 16 real parameters: diagonal (real), then strictly lower entries (re, im).
fn unpack(x: &[f64]) -> Mat4<f64> {
    let mut t = Mat4::zeros();
    let mut k = 4;
    for i in 0..4 {
        t.m[i][i] = Complex::new(x[i], 0.0);
        for j in 0..i {
            t.m[i][j] = Complex::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn pack(g: &Mat4<f64>) -> Vec<f64> {
    let mut x = vec![0.0; 16];
    let mut k = 4;
    for i in 0..4 {
        x[i] = g.m[i][i].re;
        for j in 0..i {
            x[k] = g.m[i][j].re;
            x[k + 1] = g.m[i][j].im;
            k += 2;
        }
    }
    x
}

fn state_of(x: &[f64]) -> (Mat4<f64>, Mat4<f64>, f64) {
    let t = unpack(x);
    let m = t.adjoint() * t;
    let tr = m.trace().re.max(f64::MIN_POSITIVE);
    (t, m.scale_re(1.0 / tr), tr)
}

impl Likelihood<'_> {
    fn means(&self, rho: &Mat4<f64>) -> Vec<f64> {
        self.povms
            .iter()
            .zip(&self.bright)
            .map(|(e, &b)| {
                let p = e.inner(rho).re.clamp(0.0, 1.0);
                (b * (1.0 - self.contrast * p)).max(f64::MIN_POSITIVE)
            })
            .collect()
    }

    fn value(&self, rho: &Mat4<f64>) -> f64 {
        let mu = self.means(rho);
        // Poisson deviance: the saturated model is subtracted so that the
        // optimum sits near zero and stays resolvable in floating point
        let dev: f64 = self.signal.iter().zip(&mu).map(|(&s, &m)| poisson_deviance(s, m)).sum();
        dev / self.norm
    }

    /// Gradient with respect to `rho`, as a Hermitian matrix `G` with `d f = Tr(G d rho)`.
    fn rho_gradient(&self, rho: &Mat4<f64>) -> Mat4<f64> {
        let mu = self.means(rho);
        let mut g = Mat4::zeros();
        for (k, e) in self.povms.iter().enumerate() {
            let dnll_dmu = 1.0 - self.signal[k] / mu[k];
            g += e.scale_re(-dnll_dmu * self.bright[k] * self.contrast / self.norm);
        }
        g
    }

    fn gradient_of(&self, x: &[f64]) -> Vec<f64> {
        let (t, rho, tr) = state_of(x);
        let g = self.rho_gradient(&rho);
        let trace_part = g.inner(&rho).re;
        let mut gp = g;
        for i in 0..4 {
            gp.m[i][i].re -= trace_part;
        }
        let tg = (t * gp).scale_re(2.0 / tr);
        pack(&tg)
    }
}

impl CostFunction for Likelihood<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.value(&state_of(x).1))
    }
}

impl Gradient for Likelihood<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.gradient_of(x))
    }
}

/// Iteration cap of the likelihood maximization.
pub const MLE_MAX_ITERATIONS: u64 = 5000;
/// Share of the budget given to L-BFGS before switching to Newton polishing.
const LBFGS_ITERATIONS: u64 = 1000;
/// Convergence threshold on the gradient norm of the per-shot log-likelihood.
pub const MLE_GRADIENT_TOL: f64 = 1e-8;

/// Maximum-likelihood physical state, started from the maximally mixed state.
pub fn mle_reconstruct(data: &TomogramData, readout: &ReadoutModel<f64>) -> Result<DensityMatrix<f64>> {
    data.validate()?;
    let n = data.shots as f64;
    // pooled brightness from the reference acquisitions; falls back on the model
    let pooled = data.counts_reference.iter().sum::<f64>() / data.counts_reference.len() as f64;
    let per_setting = if pooled > 0.0 { pooled } else { n * readout.counts_bright };
    let bright = vec![per_setting; data.povms.len()];
    let norm = n;
    let problem = Likelihood {
        povms: &data.povms,
        signal: &data.counts_signal,
        bright,
        contrast: readout.contrast,
        norm,
    };
    let mut x0 = vec![0.0; 16];
    x0[..4].fill(0.5);

    let mut x = x0;
    let mut iterations = 0u64;
    // L-BFGS restarts whenever its line search stalls short of the tolerance
    for _ in 0..20 {
        let grad = norm2(&problem.gradient_of(&x));
        if grad < MLE_GRADIENT_TOL || iterations >= LBFGS_ITERATIONS {
            break;
        }
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), 12)
            .with_tolerance_grad(MLE_GRADIENT_TOL)
            .and_then(|s| s.with_tolerance_cost(0.0))
            .map_err(|e| SpinLabError::Numeric(e.to_string()))?;
        let run = Executor::new(problem.clone(), solver)
            .configure(|s| s.param(x.clone()).max_iters(LBFGS_ITERATIONS.saturating_sub(iterations)))
            .run();
        match run {
            Ok(res) => {
                iterations += res.state.get_iter();
                if let Some(best) = res.state.get_best_param() {
                    x = best.clone();
                }
                let done = matches!(
                    res.state.get_termination_status(),
                    TerminationStatus::Terminated(TerminationReason::SolverConverged)
                        | TerminationStatus::Terminated(TerminationReason::MaxItersReached)
                );
                if done {
                    break;
                }
            }
            // a failed line search leaves x at the last accepted point
            Err(_) => break,
        }
    }
    if norm2(&problem.gradient_of(&x)) >= MLE_GRADIENT_TOL && iterations < MLE_MAX_ITERATIONS {
        iterations += newton_polish(&problem, &mut x, MLE_MAX_ITERATIONS - iterations);
    }
    let gradient_norm = norm2(&problem.gradient_of(&x));
    let rho = DensityMatrix::from_matrix_unchecked(state_of(&x).1.hermitian_part());
    if gradient_norm < MLE_GRADIENT_TOL {
        Ok(rho)
    } else {
        Err(SpinLabError::Convergence {
            iterations: iterations as usize,
            gradient_norm,
            last: Box::new(rho),
        })
    }
}

/// Damped Newton steps on the gradient alone. Close to the optimum the cost
/// differences drop below rounding and cost-based line searches stall; here a
/// step is accepted whenever it shrinks the gradient norm.
fn newton_polish(problem: &Likelihood<'_>, x: &mut Vec<f64>, budget: u64) -> u64 {
    let mut g = DVector::from_vec(problem.gradient_of(x));
    let mut lambda = 1e-6;
    let mut used = 0;
    while used < budget.min(200) && g.norm() >= MLE_GRADIENT_TOL {
        used += 1;
        // Hessian by central differences of the analytic gradient
        let mut h = DMatrix::zeros(16, 16);
        for j in 0..16 {
            let step = 1e-6 * x[j].abs().max(1e-2);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += step;
            xm[j] -= step;
            let gp = problem.gradient_of(&xp);
            let gm = problem.gradient_of(&xm);
            for i in 0..16 {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let scale = h.diagonal().abs().max().max(1e-12);
        let mut accepted = false;
        for _ in 0..30 {
            let damped = &h + DMatrix::identity(16, 16) * (lambda * scale);
            let Some(step) = damped.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let gt = DVector::from_vec(problem.gradient_of(&trial));
            if gt.norm() < g.norm() {
                *x = trial;
                g = gt;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    used
}

/// Log-likelihood of `rho` under the same Poisson model the estimator uses.
pub fn log_likelihood(data: &TomogramData, readout: &ReadoutModel<f64>, rho: &DensityMatrix<f64>) -> f64 {
    let pooled = data.counts_reference.iter().sum::<f64>() / data.counts_reference.len() as f64;
    let b = if pooled > 0.0 { pooled } else { data.shots as f64 * readout.counts_bright };
    data.povms
        .iter()
        .zip(&data.counts_signal)
        .map(|(e, &s)| {
            let p = e.inner(rho.matrix()).re.clamp(0.0, 1.0);
            let mu = (b * (1.0 - readout.contrast * p)).max(f64::MIN_POSITIVE);
            if s > 0.0 {
                s * mu.ln() - mu
            } else {
                -mu
            }
        })
        .sum()
}

/// `mu - s - s ln(mu / s)`, accurate when `mu` is close to `s`.
fn poisson_deviance(s: f64, mu: f64) -> f64 {
    if s <= 0.0 {
        return mu;
    }
    let d = (mu - s) / s;
    let core = if d.abs() < 1e-3 {
        d * d * (0.5 - d * (1.0 / 3.0 - d * (0.25 - d / 5.0)))
    } else {
        d - d.ln_1p()
    };
    s * core
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Split `rho = (1 - eps) I/4 + eps rho_pp` with the smallest `eps` that
/// keeps `rho_pp` positive, i.e. `eps = 1 - 4 lambda_min`.
#[derive(Clone, Debug)]
pub struct PseudoPure {
    pub epsilon: f64,
    pub state: DensityMatrix<f64>,
}

pub fn pseudo_pure_decomposition(rho: &DensityMatrix<f64>) -> Result<PseudoPure> {
    rho.check()?;
    let lmin = eigh(rho.matrix()).min_value().max(0.0);
    let epsilon = 1.0 - 4.0 * lmin;
    if epsilon <= 1e-12 {
        return Err(SpinLabError::Domain(format!("no pseudo-pure part: eps = {epsilon:.3e}")));
    }
    let mut m = *rho.matrix();
    for i in 0..4 {
        m.m[i][i].re -= lmin;
    }
    Ok(PseudoPure { epsilon, state: DensityMatrix::from_matrix_unchecked(m.scale_re(1.0 / epsilon).hermitian_part()) })
}

/// Fidelity of the pseudo-pure part of `rho` with `target`.
pub fn pseudo_pure_fidelity(rho: &DensityMatrix<f64>, target: &DensityMatrix<f64>) -> Result<f64> {
    let pp = pseudo_pure_decomposition(rho)?;
    fidelity(&pp.state, target)
}

const ROW_LABELS: [&str; 4] = ["uu", "ud", "du", "dd"];

/// Real and imaginary 4x4 blocks, rows and columns in basis order.
pub fn format_density_matrix(rho: &DensityMatrix<f64>) -> String {
    let mut out = String::new();
    for (name, part) in [("real", 0usize), ("imag", 1)] {
        let _ = writeln!(out, "# {name}");
        let _ = writeln!(out, "{:>4} {:>10} {:>10} {:>10} {:>10}", "ket", ROW_LABELS[0], ROW_LABELS[1], ROW_LABELS[2], ROW_LABELS[3]);
        for i in 0..4 {
            let _ = write!(out, "{:>4}", ROW_LABELS[i]);
            for j in 0..4 {
                let z = rho.matrix().m[i][j];
                let v = if part == 0 { z.re } else { z.im };
                // avoid printing -0.000000
                let v = if v.abs() < 5e-7 { 0.0 } else { v };
                let _ = write!(out, " {v:>10.6}");
            }
            let _ = writeln!(out);
        }
    }
    out
}

/// Inverse of [`format_density_matrix`].
pub fn parse_density_matrix(text: &str) -> Result<Mat4<f64>> {
    let mut values = Vec::with_capacity(32);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or("");
        if !ROW_LABELS.contains(&head) {
            continue;
        }
        for p in parts {
            values.push(p.parse::<f64>().map_err(|e| SpinLabError::Tomography(format!("bad entry `{p}`: {e}")))?);
        }
    }
    if values.len() != 32 {
        return Err(SpinLabError::Tomography(format!("expected 32 entries, found {}", values.len())));
    }
    Ok(Mat4::from_fn(|i, j| Complex::new(values[4 * i + j], values[16 + 4 * i + j])))
}

/// Least-squares residual `|A c - p|` of a correlator set; a diagnostic for fits.
pub fn inversion_residual(data: &TomogramData, readout: &ReadoutModel<f64>, correlators: &[f64; 16]) -> f64 {
    let a = measurement_matrix(&data.povms);
    let c = DVector::from_column_slice(correlators);
    let p = DVector::from_vec(data.populations(readout));
    (a * c - p).norm()
}
