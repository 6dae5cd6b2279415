//! Levenberg–Marquardt with Marquardt diagonal scaling and box bounds.
//!
//! Bounds are handled by projecting every trial point onto the box and
//! freezing parameters that sit on a bound while the gradient points
//! outward, so a bound-active parameter ends exactly on its bound.

use nalgebra::{DMatrix, DVector};

pub trait ResidualModel {
    fn n_params(&self) -> usize;
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub tol: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub lambda_init: f64,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: DVector<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// `false` for parameters frozen on a bound at the solution.
    pub free: Vec<bool>,
}

const LAMBDA_MAX: f64 = 1e16;
const LAMBDA_MIN: f64 = 1e-15;

fn on_bound(v: f64, b: f64) -> bool {
    b.is_finite() && (v - b).abs() <= 1e-14 * b.abs().max(1.0)
}

fn free_set(x: &DVector<f64>, g: &DVector<f64>, lower: &[f64], upper: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| {
            let pinned_low = on_bound(x[i], lower[i]) && g[i] > 0.0;
            let pinned_high = on_bound(x[i], upper[i]) && g[i] < 0.0;
            !(pinned_low || pinned_high)
        })
        .collect()
}

fn project(x: &mut DVector<f64>, lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Minimizes `‖r(x)‖²` from `x0` inside `[lower, upper]`.
pub fn minimize<M: ResidualModel>(
    model: &M,
    x0: &DVector<f64>,
    lower: &[f64],
    upper: &[f64],
    settings: &LmSettings,
) -> LmOutcome {
    let np = model.n_params();
    assert_eq!(x0.len(), np);
    let mut x = x0.clone();
    project(&mut x, lower, upper);
    let mut r = model.residuals(&x);
    let mut sse = r.norm_squared();
    let tiny = 1e-24 * sse.max(1.0);
    let mut lambda = settings.lambda_init;
    let mut last_rel = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    let mut jac = model.jacobian(&x);
    let mut g = jac.transpose() * &r;
    let mut free = free_set(&x, &g, lower, upper);

    loop {
        let gnorm = grad_norm(&g, &free);
        if sse <= tiny || (gnorm <= settings.grad_tol && last_rel <= settings.tol) {
            converged = true;
            break;
        }
        if iterations >= settings.max_iter {
            break;
        }
        iterations += 1;


        let idx: Vec<usize> = (0..np).filter(|&i| free[i]).collect();
        if idx.is_empty() {
            converged = gnorm <= settings.grad_tol;
            break;
        }
        let jf = jac.select_columns(&idx);
        let a = jf.transpose() * &jf;
        let gf = DVector::from_fn(idx.len(), |k, _| g[idx[k]]);
        let dmax = a.diagonal().max().max(f64::MIN_POSITIVE);
        let mut damped = a.clone();
        for k in 0..idx.len() {
            damped[(k, k)] += lambda * a[(k, k)].max(1e-12 * dmax);
        }
        // the damped matrix is positive definite by construction even when a
        // column of J vanishes (a reparameterized cell heading to zero), so a
        // plain Cholesky is used rather than the rank-revealing factor
        let step = match damped.cholesky() {
            Some(f) => f.solve(&(-&gf)),
            None => {
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    break;
                }
                continue;
            }
        };
        let mut trial = x.clone();
        for (k, &i) in idx.iter().enumerate() {
            trial[i] += step[k];
        }
        project(&mut trial, lower, upper);
        let r_trial = model.residuals(&trial);
        let sse_trial = r_trial.norm_squared();
        if sse_trial.is_finite() && sse_trial < sse {
            last_rel = (sse - sse_trial) / sse.max(f64::MIN_POSITIVE);
            x = trial;
            r = r_trial;
            sse = sse_trial;
            lambda = (lambda / 10.0).max(LAMBDA_MIN);
            jac = model.jacobian(&x);
            g = jac.transpose() * &r;
            free = free_set(&x, &g, lower, upper);
        } else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                // no representable decrease left: accept when the gradient is
                // small in absolute terms or relative to the column and
                // residual scales (the absolute test alone fails on data with
                // large magnitudes)
                converged = gnorm <= settings.grad_tol
                    || last_rel <= settings.tol
                    || scaled_grad_norm(&jac, &r, &g, &free) <= settings.grad_tol;
                break;
            }
        }
    }
    let gradient_norm = grad_norm(&g, &free);
    LmOutcome {
        x,
        sse,
        iterations,
        converged,
        gradient_norm,
        free,
    }
}

fn grad_norm(g: &DVector<f64>, free: &[bool]) -> f64 {
    g.iter()
        .zip(free)
        .filter(|(_, &f)| f)
        .map(|(v, _)| v.abs())
        .fold(0.0, f64::max)
}

/// Largest cosine between the residual vector and a free Jacobian column.
fn scaled_grad_norm(jac: &DMatrix<f64>, r: &DVector<f64>, g: &DVector<f64>, free: &[bool]) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    (0..g.len())
        .filter(|&i| free[i])
        .map(|i| {
            let cn = jac.column(i).norm();
            if cn == 0.0 {
                0.0
            } else {
                g[i].abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}
