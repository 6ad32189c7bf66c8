//! Levenberg-Marquardt trust region on damped Gauss-Newton normal equations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SolverConfig;

pub trait LeastSquaresProblem {
    type Error;

    /// Residuals and their Jacobian at `x`.
    fn evaluate(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), Self::Error>;

    /// Moves `x` off a point where `evaluate` failed. Returns false when the
    /// failure cannot be repaired.
    fn repair(&self, _x: &mut DVector<f64>, _err: &Self::Error) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    StepSize,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub gradient_inf: f64,
    pub termination: Termination,
    /// Objective value after each accepted step, starting with the initial
    /// value.
    pub accepted_values: Vec<f64>,
}

fn evaluate_or_repair<P: LeastSquaresProblem>(
    problem: &P,
    x: &mut DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), P::Error> {
    match problem.evaluate(x) {
        Ok(v) => Ok(v),
        Err(e) => {
            if problem.repair(x, &e) {
                problem.evaluate(x)
            } else {
                Err(e)
            }
        }
    }
}

/// Minimizes `0.5 |r(x)|^2` from `x0`. A step is accepted only when it
/// lowers the objective, so accepted values never increase.
pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    x0: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<LmReport, P::Error> {
    let mut x = x0;
    let (mut r, mut jac) = evaluate_or_repair(problem, &mut x)?;
    let mut value = 0.5 * r.norm_squared();
    let mut lambda = cfg.initial_damping;
    let mut accepted_values = vec![value];
    let mut gradient = jac.tr_mul(&r);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if gradient.amax() < cfg.gradient_tol {
            termination = Termination::Gradient;
            break;
        }
        iterations += 1;
        let jtj = jac.tr_mul(&jac);
        let max_diag = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut damped = jtj.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= cfg.damping_up;
            continue;
        };
        let step = chol.solve(&(-&gradient));
        if step.norm() < cfg.step_tol {
            termination = Termination::StepSize;
            break;
        }
        let mut trial = &x + &step;
        match evaluate_or_repair(problem, &mut trial) {
            Ok((r_new, j_new)) => {
                let v_new = 0.5 * r_new.norm_squared();
                if v_new < value {
                    x = trial;
                    r = r_new;
                    jac = j_new;
                    value = v_new;
                    gradient = jac.tr_mul(&r);
                    accepted_values.push(value);
                    lambda = (lambda / cfg.damping_down).max(1e-15);
                } else {
                    lambda *= cfg.damping_up;
                }
            }
            Err(_) => lambda *= cfg.damping_up,
        }
    }
    Ok(LmReport { x, value, iterations, gradient_inf: gradient.amax(), termination, accepted_values })
}
