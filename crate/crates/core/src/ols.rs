//! Complete-case ordinary least squares and new-observation prediction.
//!
//! Imputation for response-only missingness reduces to these pieces: the
//! point estimate of a missing cell is a new-observation prediction, and its
//! standard error is the prediction standard error at that row's leverage.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    /// Intercept first when the design carries one, then slopes.
    pub coefficients: Vec<f64>,
    /// `sse / df`
    pub sigma2: f64,
    pub df: usize,
    pub sse: f64,
    pub n_obs: usize,
    #[serde(skip)]
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    pub fn n_coefficients(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficient_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    /// Standard errors of the coefficients.
    pub fn coefficient_se(&self) -> Vec<f64> {
        (0..self.n_coefficients())
            .map(|i| (self.xtx_inv[(i, i)] * self.sigma2).max(0.0).sqrt())
            .collect()
    }
}

/// Fits `y ~ x` by solving the normal equations. `x` must already contain
/// the intercept column if one is wanted.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: y.len(),
        });
    }
    if n <= k {
        return Err(Error::Singular(format!(
            "{n} observations for {k} coefficients leaves no residual degrees of freedom"
        )));
    }
    let xtx = x.transpose() * x;
    let factor = SpdFactor::new(&xtx)?;
    let b = factor.solve(&(x.transpose() * y));
    let resid = y - x * &b;
    let sse = resid.norm_squared();
    let df = n - k;
    Ok(OlsFit {
        coefficients: b.iter().copied().collect(),
        sigma2: sse / df as f64,
        df,
        sse,
        n_obs: n,
        xtx_inv: factor.inverse(),
    })
}

/// `X_m b` for each row of `x_new`.
pub fn predict_new(fit: &OlsFit, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x_new.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    if x_new.ncols() != fit.n_coefficients() {
        return Err(Error::Dimension {
            expected: fit.n_coefficients(),
            found: x_new.ncols(),
        });
    }
    Ok(x_new * fit.coefficient_vector())
}

/// `x0ᵀ (XᵀX)⁻¹ x0`
pub fn leverage(fit: &OlsFit, x0: &DVector<f64>) -> Result<f64> {
    if x0.len() != fit.n_coefficients() {
        return Err(Error::Dimension {
            expected: fit.n_coefficients(),
            found: x0.len(),
        });
    }
    Ok(x0.dot(&(&fit.xtx_inv * x0)).max(0.0))
}

/// `sqrt(sigma2 (1 + h))`, the standard deviation behind a new-observation
/// prediction interval.
pub fn prediction_se(sigma2: f64, h: f64) -> Result<f64> {
    if sigma2.is_nan() || h.is_nan() || sigma2 < 0.0 || h < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "prediction_se needs sigma2 >= 0 and h >= 0, got {sigma2} and {h}"
        )));
    }
    Ok((sigma2 * (1.0 + h)).sqrt())
}

/// Gaussian `-2 ln L = n ln(2π) + n ln(σ²) + SSE/σ²`.
pub fn neg2_loglik(y: &DVector<f64>, x: &DMatrix<f64>, b: &DVector<f64>, sigma2: f64) -> Result<f64> {
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            found: x.nrows(),
        });
    }
    if x.ncols() != b.len() {
        return Err(Error::Dimension {
            expected: x.ncols(),
            found: b.len(),
        });
    }
    let n = y.len() as f64;
    let sse = (y - x * b).norm_squared();
    Ok(n * (2.0 * std::f64::consts::PI).ln() + n * sigma2.ln() + sse / sigma2)
}

/// Intercept-first design over `rows` using the (zero-filled) values of
/// `predictors`.
pub fn design_matrix(d: &Dataset, rows: &[usize], predictors: &[usize]) -> DMatrix<f64> {
    let k = predictors.len() + 1;
    DMatrix::from_fn(rows.len(), k, |i, j| {
        if j == 0 {
            1.0
        } else {
            d.values()[(rows[i], predictors[j - 1])]
        }
    })
}

pub fn response_vector(d: &Dataset, rows: &[usize], response: usize) -> DVector<f64> {
    DVector::from_fn(rows.len(), |i, _| d.values()[(rows[i], response)])
}
