//! Missingness in several variables: the concatenated indicator system
//! solved by nonlinear least squares, its block-coordinate cross-check, and
//! the directional bivariate closed forms.

mod alternating;
mod bivariate;
pub mod lm;
mod params;
mod system;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

pub use alternating::alternating_solve;
pub use bivariate::{bivariate_directional, DirectionalEstimates};
pub use params::{CellTransform, ParamMap};
pub use system::{build_concatenated, ConcatenatedSystem, Equation};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitPolicy {
    /// Complete-case regressions for the blocks, observed means for cells.
    #[default]
    CompleteCase,
    /// Explicit starting vector in the system's parameter layout.
    Theta(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBound {
    pub param: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlsOptions {
    /// Relative SSE change threshold.
    pub tol: f64,
    /// Largest absolute gradient component allowed at convergence.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub lambda_init: f64,
    pub bounds: Vec<ParamBound>,
}

impl Default for NlsOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            grad_tol: DEFAULT_GRAD_TOL,
            max_iter: DEFAULT_MAX_ITER,
            lambda_init: DEFAULT_LAMBDA,
            bounds: Vec::new(),
        }
    }
}

impl NlsOptions {
    pub(crate) fn lm_settings(&self) -> lm::LmSettings {
        lm::LmSettings {
            tol: self.tol,
            grad_tol: self.grad_tol,
            max_iter: self.max_iter,
            lambda_init: self.lambda_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermEstimate {
    pub term: String,
    pub estimate: f64,
    pub se_raw: Option<f64>,
    pub se_adjusted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquationEstimate {
    pub response: String,
    pub terms: Vec<TermEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlsCell {
    #[serde(skip)]
    pub cell: Cell,
    pub variable: String,
    /// 1-based observation number.
    pub row: usize,
    pub point: f64,
    pub se_raw: Option<f64>,
    pub se_adjusted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfConventions {
    /// Stacked rows minus estimated parameters.
    pub raw: f64,
    /// Raw df divided by the number of stacked blocks.
    pub adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlsResult {
    #[serde(skip)]
    pub theta: Vec<f64>,
    #[serde(skip)]
    pub se_raw: Vec<Option<f64>>,
    #[serde(skip)]
    pub se_adjusted: Vec<Option<f64>>,
    pub equations: Vec<EquationEstimate>,
    pub imputations: Vec<NlsCell>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub df: DfConventions,
    pub n_stacked_rows: usize,
    pub n_blocks: usize,
    /// Cells held on a bound at the solution, labelled `VAR@row`.
    pub active_bounds: Vec<String>,
}

impl NlsResult {
    pub fn imputation(&self, cell: Cell) -> Option<&NlsCell> {
        self.imputations.iter().find(|c| c.cell == cell)
    }

    pub fn point(&self, var: &str, row1: usize) -> Option<f64> {
        self.imputations
            .iter()
            .find(|c| c.variable == var && c.row == row1)
            .map(|c| c.point)
    }

    pub fn fills(&self) -> Vec<(Cell, f64)> {
        self.imputations.iter().map(|c| (c.cell, c.point)).collect()
    }

    /// The dataset with every missing cell replaced by its estimate.
    pub fn completed(&self, d: &Dataset) -> Dataset {
        d.completed(&self.fills())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("NlsResult serializes")
    }
}

/// Residual model in a reparameterized space `θ = map(φ)`.
pub(crate) struct MappedModel<'a> {
    pub sys: &'a ConcatenatedSystem,
    pub map: &'a ParamMap,
}

impl lm::ResidualModel for MappedModel<'_> {
    fn n_params(&self) -> usize {
        self.map.n_phi()
    }
    fn residuals(&self, phi: &DVector<f64>) -> DVector<f64> {
        self.sys.residuals(&self.map.theta(phi))
    }
    fn jacobian(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        self.sys.jacobian(&self.map.theta(phi)) * self.map.dtheta_dphi(phi)
    }
}

pub(crate) fn initial_theta(sys: &ConcatenatedSystem, init: &InitPolicy) -> Result<DVector<f64>> {
    match init {
        InitPolicy::CompleteCase => Ok(sys.complete_case_start()),
        InitPolicy::Theta(t) => {
            if t.len() != sys.n_params() {
                return Err(Error::Dimension {
                    expected: sys.n_params(),
                    found: t.len(),
                });
            }
            Ok(DVector::from_column_slice(t))
        }
    }
}

fn check_linked(sys: &ConcatenatedSystem) -> Result<()> {
    let all: Vec<usize> = (0..sys.data().n_cols()).collect();
    if sys.data().complete_rows(&all).is_empty() {
        return Err(Error::InvalidArgument(
            "no complete row links the variables; the concatenated system is not identified".into(),
        ));
    }
    Ok(())
}

/// Minimizes the stacked SSE over all block coefficients and missing cells.
pub fn solve_concatenated(sys: &ConcatenatedSystem, init: &InitPolicy, opts: &NlsOptions) -> Result<NlsResult> {
    check_linked(sys)?;
    let theta0 = initial_theta(sys, init)?;
    let map = ParamMap::identity(sys);
    let mut lower = vec![f64::NEG_INFINITY; sys.n_params()];
    let mut upper = vec![f64::INFINITY; sys.n_params()];
    for b in &opts.bounds {
        if b.param >= sys.n_params() || b.lower > b.upper {
            return Err(Error::InvalidArgument(format!(
                "bad bound on parameter {}: [{}, {}]",
                b.param, b.lower, b.upper
            )));
        }
        lower[b.param] = lower[b.param].max(b.lower);
        upper[b.param] = upper[b.param].min(b.upper);
    }
    solve_mapped(sys, &map, &theta0, &lower, &upper, opts)
}

pub(crate) fn solve_mapped(
    sys: &ConcatenatedSystem,
    map: &ParamMap,
    theta0: &DVector<f64>,
    lower: &[f64],
    upper: &[f64],
    opts: &NlsOptions,
) -> Result<NlsResult> {
    let phi0 = map.phi_from_theta(theta0);
    let model = MappedModel { sys, map };
    let out = lm::minimize(&model, &phi0, lower, upper, &opts.lm_settings());
    if !out.converged {
        log::warn!(
            "NLS stopped after {} iterations without converging (gradient {:.3e})",
            out.iterations,
            out.gradient_norm
        );
    }
    Ok(assemble(sys, map, &out.x, &out.free, out.sse, out.iterations, out.converged, out.gradient_norm))
}

/// Packages an optimum in φ-space into an [`NlsResult`] with delta-method
/// standard errors under both df conventions.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble(
    sys: &ConcatenatedSystem,
    map: &ParamMap,
    phi: &DVector<f64>,
    free: &[bool],
    sse: f64,
    iterations: usize,
    converged: bool,
    gradient_norm: f64,
) -> NlsResult {
    let theta = map.theta(phi);
    let g = map.dtheta_dphi(phi);
    let j_phi = sys.jacobian(&theta) * &g;
    let n_free = free.iter().filter(|&&f| f).count();
    let df_raw = sys.n_stacked_rows() as f64 - n_free as f64;
    let df_adj = df_raw / sys.n_blocks().max(1) as f64;

    let cov_unit = free_covariance(&j_phi, free).map(|c| &g * c * g.transpose());
    let se_for = |df: f64| -> Vec<Option<f64>> {
        match (&cov_unit, df > 0.0) {
            (Some(c), true) => (0..theta.len())
                .map(|i| Some((c[(i, i)] * sse / df).max(0.0).sqrt()))
                .collect(),
            _ => vec![None; theta.len()],
        }
    };
    let se_raw = se_for(df_raw);
    let se_adjusted = se_for(df_adj);
    if cov_unit.is_none() {
        log::warn!("Jacobian is singular at the optimum; standard errors unavailable");
    }

    let names = sys.data().names();
    let labels = sys.param_labels();
    let equations = sys
        .equations()
        .iter()
        .map(|eq| EquationEstimate {
            response: names[eq.response].clone(),
            terms: (0..eq.n_coefficients())
                .map(|s| {
                    let k = eq.offset + s;
                    let term = if s == 0 {
                        "intercept".to_string()
                    } else {
                        names[eq.predictors[s - 1]].clone()
                    };
                    TermEstimate {
                        term,
                        estimate: theta[k],
                        se_raw: se_raw[k],
                        se_adjusted: se_adjusted[k],
                    }
                })
                .collect(),
        })
        .collect();
    let imputations = sys
        .cells()
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let k = sys.n_coefficients() + m;
            NlsCell {
                cell: *c,
                variable: names[c.var].clone(),
                row: c.row + 1,
                point: theta[k],
                se_raw: se_raw[k],
                se_adjusted: se_adjusted[k],
            }
        })
        .collect();
    let active_bounds = map
        .frozen_cells(free)
        .into_iter()
        .map(|k| labels[k].clone())
        .collect();
    NlsResult {
        theta: theta.iter().copied().collect(),
        se_raw,
        se_adjusted,
        equations,
        imputations,
        sse,
        iterations,
        converged,
        gradient_norm,
        df: DfConventions {
            raw: df_raw,
            adjusted: df_adj,
        },
        n_stacked_rows: sys.n_stacked_rows(),
        n_blocks: sys.n_blocks(),
        active_bounds,
    }
}

/// `(J_Fᵀ J_F)⁻¹` embedded in a full-size matrix, zero for frozen parameters.
fn free_covariance(j: &DMatrix<f64>, free: &[bool]) -> Option<DMatrix<f64>> {
    let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    let n = free.len();
    let mut full = DMatrix::zeros(n, n);
    if idx.is_empty() {
        return Some(full);
    }
    let jf = j.select_columns(&idx);
    let inv = SpdFactor::new(&(jf.transpose() * jf)).ok()?.inverse();
    for (a, &i) in idx.iter().enumerate() {
        for (b, &k) in idx.iter().enumerate() {
            full[(i, k)] = inv[(a, b)];
        }
    }
    Some(full)
}
