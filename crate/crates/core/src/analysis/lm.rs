//! Damped Gauss–Newton (Levenberg) least squares with per-point weights.

use nalgebra::{DMatrix, DVector};

use super::FitError;

pub(crate) const MAX_ITERATIONS: usize = 200;
const REL_TOL: f64 = 1e-12;
const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e20;

pub(crate) trait Model {
    fn n_params(&self) -> usize;

    /// Model value at `x`; writes ∂f/∂p into `grad`.
    fn eval(&self, p: &[f64], x: f64, grad: &mut [f64]) -> f64;

    fn admissible(&self, _p: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub iterations: usize,
}

pub(crate) fn chi2<M: Model>(model: &M, p: &[f64], x: &[f64], y: &[f64], sigma: &[f64]) -> f64 {
    let mut grad = vec![0.0; model.n_params()];
    x.iter()
        .zip(y)
        .zip(sigma)
        .map(|((&xi, &yi), &si)| {
            let r = (yi - model.eval(p, xi, &mut grad)) / si;
            r * r
        })
        .sum()
}

/// Weighted Jacobian `J_ij = (∂f_i/∂p_j)/σ_i` and residuals `(y_i − f_i)/σ_i`.
fn linearize<M: Model>(model: &M, p: &[f64], x: &[f64], y: &[f64], sigma: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = x.len();
    let k = model.n_params();
    let mut jac = DMatrix::zeros(n, k);
    let mut res = DVector::zeros(n);
    let mut grad = vec![0.0; k];
    for i in 0..n {
        let f = model.eval(p, x[i], &mut grad);
        res[i] = (y[i] - f) / sigma[i];
        for j in 0..k {
            jac[(i, j)] = grad[j] / sigma[i];
        }
    }
    (jac, res)
}

pub(crate) fn minimize<M: Model>(model: &M, x: &[f64], y: &[f64], sigma: &[f64], start: &[f64]) -> Result<Outcome, FitError> {
    let k = model.n_params();
    let mut p = start.to_vec();
    let mut current = chi2(model, &p, x, y, sigma);
    if !current.is_finite() {
        return Err(FitError::NonFinite);
    }
    let mut lambda = LAMBDA_START;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if current <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        let (jac, res) = linearize(model, &p, x, y, sigma);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        let diag_floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);

        let mut accepted = None;
        while lambda <= LAMBDA_MAX {
            let mut damped = jtj.clone();
            for j in 0..k {
                damped[(j, j)] += lambda * jtj[(j, j)].max(diag_floor);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&jtr);
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if !model.admissible(&trial) {
                lambda *= 10.0;
                continue;
            }
            let value = chi2(model, &trial, x, y, sigma);
            if value.is_finite() && value <= current {
                accepted = Some((trial, value));
                break;
            }
            lambda *= 10.0;
        }

        match accepted {
            Some((trial, value)) => {
                let decrease = (current - value) / current;
                p = trial;
                current = value;
                lambda = (lambda / 10.0).max(1e-12);
                if decrease < REL_TOL {
                    converged = true;
                    break;
                }
            }
            // No downhill step even with maximal damping: a minimum to
            // working precision.
            None => {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(FitError::NonConvergence { iterations });
    }

    let (jac, _) = linearize(model, &p, x, y, sigma);
    let covariance = (jac.transpose() * &jac)
        .try_inverse()
        .ok_or_else(|| FitError::Degenerate("parameter covariance is singular".into()))?;
    if (0..k).any(|j| !(covariance[(j, j)] >= 0.0) || !covariance[(j, j)].is_finite()) {
        return Err(FitError::Degenerate("parameter covariance is not positive".into()));
    }
    Ok(Outcome { params: p, covariance, chi2: current, iterations })
}
