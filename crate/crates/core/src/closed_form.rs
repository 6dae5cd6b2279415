//! Closed-form imputation when only the response has missing values.
//!
//! Missing responses are zero-filled and each gets its own 0/-1 indicator
//! column. The indicator coefficients of that augmented regression are the
//! EM imputations, and they equal the complete-case new-observation
//! predictions `X_m b_o`; their standard errors equal the prediction
//! standard errors `sqrt(σ̂²(1 + h_m))`. [`impute_closed_form`] takes the
//! prediction route, [`solve_augmented_ols`] solves the augmented system
//! directly and serves as the cross-check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::ols::{self, OlsFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImputedCell {
    pub cell: Cell,
    pub point: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationSet {
    pub cells: Vec<ImputedCell>,
    /// Complete-case fit the imputations derive from.
    pub fit: OlsFit,
    pub notes: Vec<String>,
}

impl ImputationSet {
    pub fn points(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.point).collect()
    }

    pub fn ses(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.se).collect()
    }

    pub fn fills(&self) -> Vec<(Cell, f64)> {
        self.cells.iter().map(|c| (c.cell, c.point)).collect()
    }
}

/// Augmented indicator regression `[Y_o; 0_m] = [1 X | -I] [β; β_m] + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct AncovaSystem {
    pub response: DVector<f64>,
    /// Intercept, covariates, then one indicator column per missing row.
    pub design: DMatrix<f64>,
    /// 0-based rows whose response is missing, in indicator-column order.
    pub missing_rows: Vec<usize>,
    pub response_var: usize,
    pub predictors: Vec<usize>,
}

impl AncovaSystem {
    /// Number of regression (non-indicator) columns.
    pub fn n_regression(&self) -> usize {
        self.predictors.len() + 1
    }

    pub fn n_missing(&self) -> usize {
        self.missing_rows.len()
    }

    /// Same system with +1 indicators; the indicator coefficients flip sign.
    pub fn with_positive_indicators(&self) -> AncovaSystem {
        let mut s = self.clone();
        let k = self.n_regression();
        for j in k..s.design.ncols() {
            for i in 0..s.design.nrows() {
                s.design[(i, j)] = -s.design[(i, j)];
            }
        }
        s
    }
}

pub(crate) fn check_response_only(
    d: &Dataset,
    response: usize,
    predictors: &[usize],
) -> Result<()> {
    let p = d.n_cols();
    for &j in predictors.iter().chain(std::iter::once(&response)) {
        if j >= p {
            return Err(Error::Dimension {
                expected: p,
                found: j + 1,
            });
        }
    }
    if predictors.contains(&response) {
        return Err(Error::InvalidArgument(format!(
            "response `{}` also listed as a predictor",
            d.names()[response]
        )));
    }
    for &j in predictors {
        if let Some(&i) = d.missing_rows(j).first() {
            return Err(Error::MissingPredictor {
                variable: d.names()[j].clone(),
                row: i + 1,
            });
        }
    }
    Ok(())
}

pub fn build_ancova(d: &Dataset, response: usize, predictors: &[usize]) -> Result<AncovaSystem> {
    check_response_only(d, response, predictors)?;
    let n = d.n_rows();
    let k = predictors.len() + 1;
    let missing_rows = d.missing_rows(response);
    let all: Vec<usize> = (0..n).collect();
    let base = ols::design_matrix(d, &all, predictors);
    let mut design = DMatrix::zeros(n, k + missing_rows.len());
    design.columns_mut(0, k).copy_from(&base);
    for (m, &i) in missing_rows.iter().enumerate() {
        design[(i, k + m)] = -1.0;
    }
    Ok(AncovaSystem {
        response: ols::response_vector(d, &all, response),
        design,
        missing_rows,
        response_var: response,
        predictors: predictors.to_vec(),
    })
}

/// Imputes missing responses as complete-case predictions with prediction
/// standard errors.
pub fn impute_closed_form(d: &Dataset, response: usize, predictors: &[usize]) -> Result<ImputationSet> {
    check_response_only(d, response, predictors)?;
    let obs = d.observed_rows(response);
    let fit = ols::fit_ols(
        &ols::design_matrix(d, &obs, predictors),
        &ols::response_vector(d, &obs, response),
    )?;
    let miss = d.missing_rows(response);
    let xm = ols::design_matrix(d, &miss, predictors);
    let points = ols::predict_new(&fit, &xm)?;
    let mut cells = Vec::with_capacity(miss.len());
    for (m, &row) in miss.iter().enumerate() {
        let x0 = xm.row(m).transpose();
        let h = ols::leverage(&fit, &x0)?;
        cells.push(ImputedCell {
            cell: Cell::new(row, response),
            point: points[m],
            se: ols::prediction_se(fit.sigma2, h)?,
        });
    }
    Ok(ImputationSet {
        cells,
        fit,
        notes: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSolution {
    pub b_o: Vec<f64>,
    pub b_m: Vec<f64>,
    pub s_bm: Vec<f64>,
    /// Fit of the full augmented system; its `df` is `n_o - k`.
    pub fit: OlsFit,
}

/// Solves the augmented normal equations with no partitioning shortcut.
pub fn solve_augmented_ols(sys: &AncovaSystem) -> Result<AugmentedSolution> {
    let fit = ols::fit_ols(&sys.design, &sys.response)?;
    let k = sys.n_regression();
    let s_bm = (k..fit.n_coefficients())
        .map(|j| (fit.xtx_inv[(j, j)] * fit.sigma2).max(0.0).sqrt())
        .collect();
    Ok(AugmentedSolution {
        b_o: fit.coefficients[..k].to_vec(),
        b_m: fit.coefficients[k..].to_vec(),
        s_bm,
        fit,
    })
}

/// Summary moments for a bivariate normal sample where the second variable
/// is missing on `n - n_obs` rows and the first is always observed.
///
/// Sums of squares and cross products (`s_*_obs`) are about the
/// observed-row means; `mean_sq_x_all` is the all-row second central moment
/// of the first variable (divisor `n`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateMoments {
    pub n: usize,
    pub n_obs: usize,
    pub sum_x_all: f64,
    pub mean_sq_x_all: f64,
    pub sum_x_obs: f64,
    pub sum_y_obs: f64,
    pub s_xx_obs: f64,
    pub s_yy_obs: f64,
    pub s_xy_obs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BivariateMle {
    pub slope: f64,
    pub mu2: f64,
    pub sigma12: f64,
    pub sigma22: f64,
}

/// Explicit maximum-likelihood estimates for the monotone bivariate normal
/// pattern (the limit EM converges to).
pub fn monotone_bivariate_mle(m: &BivariateMoments) -> Result<BivariateMle> {
    if m.n_obs < 2 || m.n_obs > m.n || m.n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= n_obs <= n, got n_obs = {} and n = {}",
            m.n_obs, m.n
        )));
    }
    if m.s_xx_obs.is_nan() || m.s_xx_obs <= 0.0 {
        return Err(Error::Singular(
            "first variable is constant on the observed rows".into(),
        ));
    }
    let (n, no) = (m.n as f64, m.n_obs as f64);
    let slope = m.s_xy_obs / m.s_xx_obs;
    let mu2 = m.sum_y_obs / no + slope * (m.sum_x_all / n - m.sum_x_obs / no);
    let sigma22 = m.s_yy_obs / no + slope * slope * (m.mean_sq_x_all - m.s_xx_obs / no);
    let sigma12 = slope * m.mean_sq_x_all;
    Ok(BivariateMle {
        slope,
        mu2,
        sigma12,
        sigma22,
    })
}
