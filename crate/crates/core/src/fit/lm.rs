//! Box-constrained Levenberg-Marquardt.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SpinLabError};

#[derive(Clone, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Convergence threshold on `|J^T r|_inf`.
    pub gradient_tol: f64,
    /// Relative parameter-step threshold.
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, gradient_tol: 1e-10, step_tol: 1e-14 }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// `(J^T J)^-1` at the optimum; multiply by the residual variance for a covariance.
    pub jtj_inverse: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub cost: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub at_bound: Vec<bool>,
}

pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn free(n: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// Minimizes `|r(x)|^2 / 2`. `jac` returns the `m x n` Jacobian of `r`.
pub fn levenberg_marquardt(
    residual: impl Fn(&[f64]) -> Vec<f64>,
    jac: impl Fn(&[f64]) -> DMatrix<f64>,
    x0: &[f64],
    bounds: &Bounds,
    opts: &LmOptions,
) -> Result<LmOutcome> {
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut r = DVector::from_vec(residual(&x));
    if r.iter().any(|v| !v.is_finite()) {
        return Err(SpinLabError::Fit("residuals not finite at the initial guess".into()));
    }
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;

    while iterations < opts.max_iterations {
        iterations += 1;
        let j = jac(&x);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        grad_norm = projected_gradient_norm(&g, &x, bounds);
        if grad_norm < opts.gradient_tol {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            bounds.project(&mut trial);
            let rt = DVector::from_vec(residual(&trial));
            let ct = 0.5 * rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let dx = trial.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let xs = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
                let small = dx <= opts.step_tol * xs;
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            let g = jac(&x).transpose() * &r;
            grad_norm = projected_gradient_norm(&g, &x, bounds);
            break;
        }
        if !improved {
            // No descent possible at working precision: a stationary point.
            converged = grad_norm < opts.gradient_tol.sqrt();
            break;
        }
    }

    let j = jac(&x);
    let jtj = j.transpose() * &j;
    let jtj_inverse = jtj
        .clone()
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-14).ok())
        .ok_or_else(|| SpinLabError::Fit("singular normal matrix".into()))?;
    let at_bound = (0..n)
        .map(|i| {
            let span = (bounds.upper[i] - bounds.lower[i]).abs();
            let tol = if span.is_finite() { 1e-9 * span } else { 0.0 };
            (x[i] - bounds.lower[i]).abs() <= tol || (bounds.upper[i] - x[i]).abs() <= tol
        })
        .collect();
    Ok(LmOutcome {
        params: x,
        jtj_inverse,
        residuals: r.iter().copied().collect(),
        cost,
        gradient_norm: grad_norm,
        iterations,
        converged,
        at_bound,
    })
}

/// Gradient norm ignoring components that push against an active bound.
fn projected_gradient_norm(g: &DVector<f64>, x: &[f64], b: &Bounds) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..x.len() {
        let gi = g[i];
        let blocked = (x[i] <= b.lower[i] && gi > 0.0) || (x[i] >= b.upper[i] && gi < 0.0);
        if !blocked {
            best = best.max(gi.abs());
        }
    }
    best
}

/// Central-difference Jacobian.
pub fn numeric_jacobian(residual: &impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let r0 = residual(x);
    let mut j = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = 1e-6 * x[k].abs().max(1e-3);
        xp[k] = x[k] + h;
        let rp = residual(&xp);
        xp[k] = x[k] - h;
        let rm = residual(&xp);
        xp[k] = x[k];
        for i in 0..r0.len() {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    j
}
