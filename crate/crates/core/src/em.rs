//! Classical iterative EM for a regression whose response has missing
//! values: fill the missing responses with the current predictions, refit on
//! the completed data, repeat until the coefficients stop moving.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::closed_form::{self, ImputationSet};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::ols;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum EmInit {
    /// Start at the complete-case fit; EM is then already at its fixed point.
    #[default]
    CompleteCase,
    Coefficients(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub init: EmInit,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            init: EmInit::CompleteCase,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmIteration {
    pub tau: usize,
    pub coefficients: Vec<f64>,
    /// Residual sum of squares over the observed responses.
    pub sse: f64,
    /// `-2 ln L` of the observed responses with σ² profiled out.
    pub neg2ll: f64,
    pub imputations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmTrace {
    pub iterations: Vec<EmIteration>,
    pub converged: bool,
    pub final_tau: usize,
}

impl EmTrace {
    /// `tau,b0,b1,...,sse,neg2ll`, one row per recorded iteration.
    pub fn to_csv(&self) -> String {
        let k = self.iterations.first().map_or(0, |it| it.coefficients.len());
        let mut out = String::from("tau");
        for j in 0..k {
            out.push_str(&format!(",b{j}"));
        }
        out.push_str(",sse,neg2ll\n");
        for it in &self.iterations {
            out.push_str(&it.tau.to_string());
            for b in &it.coefficients {
                out.push_str(&format!(",{b}"));
            }
            out.push_str(&format!(",{},{}\n", it.sse, it.neg2ll));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EmOutcome {
    /// Coefficients at the EM limit.
    pub coefficients: Vec<f64>,
    /// Points from the final coefficients; standard errors from the
    /// complete-case fit.
    pub imputations: ImputationSet,
    pub trace: EmTrace,
}

/// Pre-assembled pieces of one response/predictor EM problem.
#[derive(Debug, Clone)]
pub struct EmProblem {
    x_all: DMatrix<f64>,
    x_obs: DMatrix<f64>,
    x_mis: DMatrix<f64>,
    y_obs: DVector<f64>,
    obs_rows: Vec<usize>,
    mis_rows: Vec<usize>,
    full_factor: SpdFactor,
}

impl EmProblem {
    pub fn new(d: &Dataset, response: usize, predictors: &[usize]) -> Result<Self> {
        closed_form::check_response_only(d, response, predictors)?;
        let obs_rows = d.observed_rows(response);
        let mis_rows = d.missing_rows(response);
        let all: Vec<usize> = (0..d.n_rows()).collect();
        let x_all = ols::design_matrix(d, &all, predictors);
        let full_factor = SpdFactor::new(&(x_all.transpose() * &x_all))?;
        Ok(Self {
            x_obs: ols::design_matrix(d, &obs_rows, predictors),
            x_mis: ols::design_matrix(d, &mis_rows, predictors),
            y_obs: ols::response_vector(d, &obs_rows, response),
            x_all,
            obs_rows,
            mis_rows,
            full_factor,
        })
    }

    pub fn n_coefficients(&self) -> usize {
        self.x_all.ncols()
    }

    pub fn fill(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.x_mis * b
    }

    /// One E+M update: fill the missing responses at `b`, refit on all rows.
    pub fn step(&self, b: &DVector<f64>) -> DVector<f64> {
        let filled = self.fill(b);
        let mut y = DVector::zeros(self.x_all.nrows());
        for (k, &i) in self.obs_rows.iter().enumerate() {
            y[i] = self.y_obs[k];
        }
        for (k, &i) in self.mis_rows.iter().enumerate() {
            y[i] = filled[k];
        }
        self.full_factor.solve(&(self.x_all.transpose() * y))
    }

    pub fn observed_sse(&self, b: &DVector<f64>) -> f64 {
        (&self.y_obs - &self.x_obs * b).norm_squared()
    }

    fn record(&self, tau: usize, b: &DVector<f64>) -> EmIteration {
        let sse = self.observed_sse(b);
        let n = self.y_obs.len() as f64;
        let neg2ll = if sse > 0.0 {
            ols::neg2_loglik(&self.y_obs, &self.x_obs, b, sse / n).unwrap_or(f64::NAN)
        } else {
            f64::NEG_INFINITY
        };
        EmIteration {
            tau,
            coefficients: b.iter().copied().collect(),
            sse,
            neg2ll,
            imputations: self.fill(b).iter().copied().collect(),
        }
    }
}

/// Single EM update from `coefficients`.
pub fn em_step(d: &Dataset, response: usize, predictors: &[usize], coefficients: &[f64]) -> Result<Vec<f64>> {
    let prob = EmProblem::new(d, response, predictors)?;
    if coefficients.len() != prob.n_coefficients() {
        return Err(Error::Dimension {
            expected: prob.n_coefficients(),
            found: coefficients.len(),
        });
    }
    Ok(prob
        .step(&DVector::from_column_slice(coefficients))
        .iter()
        .copied()
        .collect())
}

fn converged(prev: &DVector<f64>, next: &DVector<f64>, tol: f64) -> bool {
    prev.iter()
        .zip(next.iter())
        .all(|(a, b)| (a - b).abs() < tol * a.abs().max(b.abs()).max(1.0))
}

pub fn run_em(d: &Dataset, response: usize, predictors: &[usize], opts: &EmOptions) -> Result<EmOutcome> {
    let complete = closed_form::impute_closed_form(d, response, predictors)?;
    let prob = EmProblem::new(d, response, predictors)?;
    let mut b = match &opts.init {
        EmInit::CompleteCase => complete.fit.coefficient_vector(),
        EmInit::Coefficients(c) => {
            if c.len() != prob.n_coefficients() {
                return Err(Error::Dimension {
                    expected: prob.n_coefficients(),
                    found: c.len(),
                });
            }
            DVector::from_column_slice(c)
        }
    };
    let mut iterations = vec![prob.record(0, &b)];
    let mut done = prob.mis_rows.is_empty();
    let mut tau = 0;
    while !done && tau < opts.max_iter {
        let next = prob.step(&b);
        if converged(&b, &next, opts.tol) {
            done = true;
            break;
        }
        tau += 1;
        b = next;
        iterations.push(prob.record(tau, &b));
    }
    if !done {
        log::warn!("EM stopped after {} iterations without converging", opts.max_iter);
    }
    let points = prob.fill(&b);
    let mut imputations = complete;
    for (cell, p) in imputations.cells.iter_mut().zip(points.iter()) {
        cell.point = *p;
    }
    Ok(EmOutcome {
        coefficients: b.iter().copied().collect(),
        imputations,
        trace: EmTrace {
            iterations,
            converged: done,
            final_tau: tau,
        },
    })
}
