use nalgebra::{DMatrix, DVector};

use crate::dataset::{self, Cell, Dataset};
use crate::error::{Error, Result};
use crate::ols;

/// One regression block: `response` on an intercept plus `predictors`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub response: usize,
    pub predictors: Vec<usize>,
    /// Index of this block's intercept in the parameter vector.
    pub offset: usize,
}

impl Equation {
    pub fn n_coefficients(&self) -> usize {
        self.predictors.len() + 1
    }
}

/// Stacked indicator regressions, one block per variable with missing cells.
///
/// Parameters are laid out as every block's `[intercept, slopes...]` in
/// block order, followed by one parameter per missing cell (ordered by
/// variable, then row). A cell parameter is shared by all blocks: in its own
/// variable's block it is subtracted (the zero-filled response minus the
/// cell), and in every other block it replaces the zero-filled predictor and
/// is multiplied by that block's slope.
#[derive(Debug, Clone)]
pub struct ConcatenatedSystem {
    data: Dataset,
    equations: Vec<Equation>,
    cells: Vec<Cell>,
    cell_param: Vec<Option<usize>>,
    n_coef: usize,
}

impl ConcatenatedSystem {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn n_blocks(&self) -> usize {
        self.equations.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.n_coef
    }

    pub fn n_params(&self) -> usize {
        self.n_coef + self.cells.len()
    }

    pub fn n_stacked_rows(&self) -> usize {
        self.equations.len() * self.data.n_rows()
    }

    /// Parameter index of a missing cell.
    pub fn cell_param(&self, row: usize, var: usize) -> Option<usize> {
        self.cell_param[row * self.data.n_cols() + var]
    }

    /// Observed value, or the cell parameter where the value is missing.
    pub fn completed_value(&self, theta: &DVector<f64>, row: usize, var: usize) -> f64 {
        match self.cell_param(row, var) {
            Some(k) => theta[k],
            None => self.data.values()[(row, var)],
        }
    }

    /// Stacked zero-filled responses.
    pub fn stacked_response(&self) -> DVector<f64> {
        let n = self.data.n_rows();
        let mut y = DVector::zeros(self.n_stacked_rows());
        for (e, eq) in self.equations.iter().enumerate() {
            for i in 0..n {
                y[e * n + i] = self.data.values()[(i, eq.response)];
            }
        }
        y
    }

    /// Residuals `y - f(θ)` of every stacked row.
    pub fn residuals(&self, theta: &DVector<f64>) -> DVector<f64> {
        let n = self.data.n_rows();
        let mut r = DVector::zeros(self.n_stacked_rows());
        for (e, eq) in self.equations.iter().enumerate() {
            for i in 0..n {
                let mut pred = theta[eq.offset];
                for (s, &u) in eq.predictors.iter().enumerate() {
                    pred += theta[eq.offset + 1 + s] * self.completed_value(theta, i, u);
                }
                if let Some(k) = self.cell_param(i, eq.response) {
                    pred -= theta[k];
                }
                r[e * n + i] = self.data.values()[(i, eq.response)] - pred;
            }
        }
        r
    }

    /// Analytic Jacobian of [`residuals`](Self::residuals).
    pub fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = self.data.n_rows();
        let mut j = DMatrix::zeros(self.n_stacked_rows(), self.n_params());
        for (e, eq) in self.equations.iter().enumerate() {
            for i in 0..n {
                let row = e * n + i;
                j[(row, eq.offset)] = -1.0;
                for (s, &u) in eq.predictors.iter().enumerate() {
                    let slope = eq.offset + 1 + s;
                    j[(row, slope)] = -self.completed_value(theta, i, u);
                    if let Some(k) = self.cell_param(i, u) {
                        j[(row, k)] -= theta[slope];
                    }
                }
                if let Some(k) = self.cell_param(i, eq.response) {
                    j[(row, k)] += 1.0;
                }
            }
        }
        j
    }

    pub fn sse(&self, theta: &DVector<f64>) -> f64 {
        self.residuals(theta).norm_squared()
    }

    /// Human-readable parameter names: `X1:intercept`, `X1:X2`, `X1@10`.
    pub fn param_labels(&self) -> Vec<String> {
        let names = self.data.names();
        let mut out = Vec::with_capacity(self.n_params());
        for eq in &self.equations {
            out.push(format!("{}:intercept", names[eq.response]));
            for &u in &eq.predictors {
                out.push(format!("{}:{}", names[eq.response], names[u]));
            }
        }
        out.extend(self.cells.iter().map(|c| c.label(names)));
        out
    }

    /// Starting values: complete-case regressions per block, missing cells at
    /// their variable's observed mean.
    pub fn complete_case_start(&self) -> DVector<f64> {
        let d = &self.data;
        let mut theta = DVector::zeros(self.n_params());
        for eq in &self.equations {
            let mut vars = eq.predictors.clone();
            vars.push(eq.response);
            let rows = d.complete_rows(&vars);
            let fit = ols::fit_ols(
                &ols::design_matrix(d, &rows, &eq.predictors),
                &ols::response_vector(d, &rows, eq.response),
            );
            match fit {
                Ok(f) => {
                    for (s, b) in f.coefficients.iter().enumerate() {
                        theta[eq.offset + s] = *b;
                    }
                }
                Err(e) => {
                    log::debug!(
                        "complete-case start for `{}` unavailable ({e}); using observed mean",
                        d.names()[eq.response]
                    );
                    theta[eq.offset] = d.observed_mean(eq.response).unwrap_or(0.0);
                }
            }
        }
        for (k, c) in self.cells.iter().enumerate() {
            theta[self.n_coef + k] = d.observed_mean(c.var).unwrap_or(0.0);
        }
        theta
    }
}

/// Builds one block per incomplete variable, each regressing that variable
/// on all the others. Complete variables only appear as predictors.
pub fn build_concatenated(d: &Dataset) -> Result<ConcatenatedSystem> {
    let pat = dataset::validate(d)?;
    let (n, p) = (d.n_rows(), d.n_cols());
    if p < 2 {
        return Err(Error::InvalidArgument(
            "the concatenated system needs at least two variables".into(),
        ));
    }
    for v in &pat.variables {
        if v.n_observed == 0 {
            return Err(Error::Unidentifiable(v.name.clone()));
        }
    }
    let incomplete = pat.incomplete_variables();
    let mut equations = Vec::with_capacity(incomplete.len());
    let mut offset = 0;
    for &v in &incomplete {
        let predictors: Vec<usize> = (0..p).filter(|&u| u != v).collect();
        let eq = Equation {
            response: v,
            predictors,
            offset,
        };
        offset += eq.n_coefficients();
        equations.push(eq);
    }
    let n_coef = offset;
    let cells = d.missing_cells();
    let mut cell_param = vec![None; n * p];
    for (k, c) in cells.iter().enumerate() {
        cell_param[c.row * p + c.var] = Some(n_coef + k);
    }
    Ok(ConcatenatedSystem {
        data: d.clone(),
        equations,
        cells,
        cell_param,
        n_coef,
    })
}
