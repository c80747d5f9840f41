//! Levenberg-Marquardt for small dense nonlinear least-squares problems.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::Result;

pub trait LeastSquaresProblem {
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Defaults to forward differences.
    fn jacobian(&self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DMatrix<f64>> {
        forward_difference_jacobian(self, x, r)
    }
}

pub fn forward_difference_jacobian<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(r.len(), x.len());
    let mut xp = x.clone();
    for c in 0..x.len() {
        let h = f64::EPSILON.sqrt() * x[c].abs().max(1.0);
        xp[c] = x[c] + h;
        let rp = problem.residual(&xp)?;
        jac.set_column(c, &((rp - r) / h));
        xp[c] = x[c];
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 400, gradient_tolerance: 1e-10, step_tolerance: 1e-12, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    /// `||r||_2`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }
}

/// Nielsen's damping update; the best point seen is always returned.
pub fn levenberg_marquardt<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    x0: DVector<f64>,
    options: &LmOptions,
) -> Result<LmReport> {
    let mut x = x0;
    let mut r = problem.residual(&x)?;
    let mut cost = 0.5 * r.norm_squared();
    let n = x.len();
    if n == 0 {
        let residual_norm = r.norm();
        return Ok(LmReport { x, residual: r, residual_norm, iterations: 0, termination: Termination::Gradient });
    }
    let mut jac = problem.jacobian(&x, &r)?;
    let mut a = jac.transpose() * &jac;
    let mut g = jac.transpose() * &r;
    let mut mu = options.initial_damping * a.diagonal().max().max(f64::MIN_POSITIVE);
    let mut nu = 2.0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    for it in 1..=options.max_iterations {
        iterations = it;
        if g.amax() < options.gradient_tolerance {
            termination = Termination::Gradient;
            break;
        }
        let mut lhs = a.clone();
        for i in 0..n {
            lhs[(i, i)] += mu;
        }
        let h = match lhs.cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        if h.norm() < options.step_tolerance * (x.norm() + options.step_tolerance) {
            termination = Termination::Step;
            break;
        }
        let x_new = &x + &h;
        let r_new = problem.residual(&x_new)?;
        let cost_new = 0.5 * r_new.norm_squared();
        let predicted = 0.5 * h.dot(&(&h * mu - &g));
        let rho = (cost - cost_new) / predicted;
        if rho > 0.0 && cost_new.is_finite() {
            x = x_new;
            r = r_new;
            cost = cost_new;
            jac = problem.jacobian(&x, &r)?;
            a = jac.transpose() * &jac;
            g = jac.transpose() * &r;
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
        } else {
            mu *= nu;
            nu *= 2.0;
        }
    }
    let residual_norm = r.norm();
    Ok(LmReport { x, residual: r, residual_norm, iterations, termination })
}
