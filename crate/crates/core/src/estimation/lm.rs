//! Damped Gauss–Newton (Levenberg–Marquardt) least squares.

use nalgebra::{DMatrix, DVector};

pub const GRADIENT_TOL: f64 = 1e-10;
pub const STEP_TOL: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 200;

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MIN: f64 = 1e-15;
const LAMBDA_MAX: f64 = 1e20;

/// Residuals r(x) and Jacobian ∂r/∂x at a parameter vector.
pub trait Problem {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: DVector<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// max |Jᵀr| at the returned point.
    pub gradient_max: f64,
}

impl Outcome {
    pub fn cost(&self) -> f64 {
        0.5 * self.residuals.norm_squared()
    }
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Minimizes ½‖r(x)‖². Converges when max |Jᵀr| < [`GRADIENT_TOL`] or
/// the step is below [`STEP_TOL`] relative to ‖x‖.
pub fn minimize(problem: &impl Problem, x0: DVector<f64>) -> Outcome {
    let mut x = x0;
    let mut r = problem.residuals(&x);
    let mut j = problem.jacobian(&x);
    let mut c = cost(&r);
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        let g = j.transpose() * &r;
        if g.amax() < GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;

        let jtj = j.transpose() * &j;
        let mut a = jtj.clone();
        for k in 0..a.nrows() {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(chol) = a.cholesky() else {
            lambda = (lambda * 10.0).min(LAMBDA_MAX);
            continue;
        };
        let step = chol.solve(&(-&g));
        if step.norm() <= STEP_TOL * (x.norm() + STEP_TOL) {
            converged = true;
            break;
        }
        let x_new = &x + &step;
        let r_new = problem.residuals(&x_new);
        let c_new = cost(&r_new);
        if c_new.is_finite() && c_new <= c {
            x = x_new;
            r = r_new;
            c = c_new;
            j = problem.jacobian(&x);
            lambda = (lambda / 10.0).max(LAMBDA_MIN);
        } else if lambda >= LAMBDA_MAX {
            break;
        } else {
            lambda = (lambda * 10.0).min(LAMBDA_MAX);
        }
    }

    let gradient_max = (j.transpose() * &r).amax();
    Outcome {
        x,
        residuals: r,
        jacobian: j,
        iterations,
        converged,
        gradient_max,
    }
}

/// (JᵀJ)⁻¹ scaled by the reduced χ², or `None` if JᵀJ is singular.
pub fn covariance(jacobian: &DMatrix<f64>, residuals: &DVector<f64>) -> Option<DMatrix<f64>> {
    let (n, p) = jacobian.shape();
    let jtj = jacobian.transpose() * jacobian;
    let inv = jtj.try_inverse()?;
    let dof = n.saturating_sub(p).max(1) as f64;
    Some(inv * (residuals.norm_squared() / dof))
}
