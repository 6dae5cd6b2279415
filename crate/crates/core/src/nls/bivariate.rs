use nalgebra::{DMatrix, DVector};

use crate::closed_form::{ImputationSet, ImputedCell};
use crate::dataset::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::ols::{self, OlsFit};

const SLOPE_EPS: f64 = 1e-12;

/// Both directional solutions for a two-variable data set where no row
/// misses both values.
///
/// `yx` uses the Y|X complete-pair fit: missing `y` are predicted directly
/// and missing `x` come from inverting the line. `xy` does the same from the
/// X|Y fit. In both sets a cell's standard error is the prediction standard
/// error from the regression that has that cell's variable as its response.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalEstimates {
    pub yx: ImputationSet,
    pub xy: ImputationSet,
    /// Cells whose inverse-direction estimate is undefined (slope of zero).
    pub failures: Vec<String>,
}

fn pair_fit(d: &Dataset, rows: &[usize], response: usize, predictor: usize) -> Result<OlsFit> {
    ols::fit_ols(
        &ols::design_matrix(d, rows, &[predictor]),
        &ols::response_vector(d, rows, response),
    )
}

fn prediction(fit: &OlsFit, v: f64) -> Result<(f64, f64)> {
    let x0 = DVector::from_vec(vec![1.0, v]);
    let point = ols::predict_new(fit, &DMatrix::from_row_slice(1, 2, &[1.0, v]))?[0];
    let se = ols::prediction_se(fit.sigma2, ols::leverage(fit, &x0)?)?;
    Ok((point, se))
}

pub fn bivariate_directional(d: &Dataset, x: usize, y: usize) -> Result<DirectionalEstimates> {
    let p = d.n_cols();
    if x >= p || y >= p || x == y {
        return Err(Error::InvalidArgument("need two distinct variables".into()));
    }
    let both_missing = (0..d.n_rows()).find(|&i| !d.is_observed(i, x) && !d.is_observed(i, y));
    if let Some(i) = both_missing {
        return Err(Error::Unsupported(format!(
            "row {} misses both `{}` and `{}`; directional estimates need a complementary pattern",
            i + 1,
            d.names()[x],
            d.names()[y]
        )));
    }
    let pairs = d.complete_rows(&[x, y]);
    if pairs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "directional estimates need at least 3 complete pairs, found {}",
            pairs.len()
        )));
    }
    let fit_yx = pair_fit(d, &pairs, y, x)?;
    let fit_xy = pair_fit(d, &pairs, x, y)?;
    let names = d.names();

    let mut failures = Vec::new();
    let mut yx_cells = Vec::new();
    let mut xy_cells = Vec::new();
    for i in 0..d.n_rows() {
        if !d.is_observed(i, y) {
            // y missing: direct in Y|X, inverse in X|Y
            let v = d.values()[(i, x)];
            let (direct, se) = prediction(&fit_yx, v)?;
            let cell = Cell::new(i, y);
            yx_cells.push(ImputedCell { cell, point: direct, se });
            match invert(&fit_xy, v) {
                Some(point) => xy_cells.push(ImputedCell { cell, point, se }),
                None => failures.push(cell.label(names)),
            }
        } else if !d.is_observed(i, x) {
            let v = d.values()[(i, y)];
            let (direct, se) = prediction(&fit_xy, v)?;
            let cell = Cell::new(i, x);
            xy_cells.push(ImputedCell { cell, point: direct, se });
            match invert(&fit_yx, v) {
                Some(point) => yx_cells.push(ImputedCell { cell, point, se }),
                None => failures.push(cell.label(names)),
            }
        }
    }
    // keep the variable-then-row order used everywhere else
    let order = |c: &ImputedCell| (c.cell.var, c.cell.row);
    yx_cells.sort_by_key(order);
    xy_cells.sort_by_key(order);
    failures.sort();
    Ok(DirectionalEstimates {
        yx: ImputationSet {
            cells: yx_cells,
            fit: fit_yx,
            notes: Vec::new(),
        },
        xy: ImputationSet {
            cells: xy_cells,
            fit: fit_xy,
            notes: Vec::new(),
        },
        failures,
    })
}

/// Solves `v = b0 + b1 u` for `u`.
fn invert(fit: &OlsFit, v: f64) -> Option<f64> {
    let (b0, b1) = (fit.coefficients[0], fit.coefficients[1]);
    (b1.abs() > SLOPE_EPS).then(|| (v - b0) / b1)
}
