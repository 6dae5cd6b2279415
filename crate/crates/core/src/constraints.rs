//! Constrained imputation: known totals, per-cell lower bounds, and
//! positivity through reparameterization.
//!
//! A constraint document looks like
//!
//! ```json
//! {
//!   "variables": {
//!     "X1": { "mode": "total-linear", "total": 43 },
//!     "X2": { "mode": "total-ratio", "preserve_mean": true },
//!     "X4": { "mode": "nonneg-exp" }
//!   },
//!   "lower_bounds": [ { "variable": "X1", "row": 11, "bound": 0 } ]
//! }
//! ```
//!
//! Totals refer to the sum of a variable's missing cells. `preserve_mean`
//! sets that total to `n_m` times the observed mean. Rows are 1-based.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::closed_form::{self, ImputationSet, ImputedCell};
use crate::dataset::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::nls::{self, CellTransform, ConcatenatedSystem, InitPolicy, NlsOptions, NlsResult, ParamMap};
use crate::ols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    #[default]
    None,
    /// Cells sum to a known total; the last cell is eliminated.
    TotalLinear,
    /// Each cell is `e^α`, so estimates stay positive.
    NonnegExp,
    /// Cells are positive shares of a known positive total.
    TotalRatio,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableConstraint {
    #[serde(default)]
    pub mode: ConstraintMode,
    #[serde(default)]
    pub total: Option<f64>,
    #[serde(default)]
    pub preserve_mean: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBound {
    pub variable: String,
    /// 1-based observation number.
    pub row: usize,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    #[serde(default)]
    pub variables: BTreeMap<String, VariableConstraint>,
    #[serde(default)]
    pub lower_bounds: Vec<LowerBound>,
}

impl ConstraintSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn is_empty(&self) -> bool {
        self.lower_bounds.is_empty() && self.variables.values().all(|v| v.mode == ConstraintMode::None)
    }

    /// A single lower bound on one cell.
    pub fn lower_bound(variable: &str, row: usize, bound: f64) -> Self {
        Self {
            variables: BTreeMap::new(),
            lower_bounds: vec![LowerBound {
                variable: variable.to_string(),
                row,
                bound,
            }],
        }
    }

    pub fn with_mode(mut self, variable: &str, mode: ConstraintMode, total: Option<f64>) -> Self {
        self.variables.insert(
            variable.to_string(),
            VariableConstraint {
                mode,
                total,
                preserve_mean: false,
            },
        );
        self
    }
}

/// A spec checked against a data set: totals resolved, cells located.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConstraints {
    /// Mode and resolved total per variable index.
    pub modes: BTreeMap<usize, (ConstraintMode, Option<f64>)>,
    pub bounds: BTreeMap<Cell, f64>,
}

pub fn resolve(d: &Dataset, spec: &ConstraintSpec) -> Result<ResolvedConstraints> {
    let names = d.names();
    let mut modes = BTreeMap::new();
    for (name, vc) in &spec.variables {
        let var = d.column_index(name)?;
        let n_m = d.missing_rows(var).len();
        let total = match (vc.total, vc.preserve_mean) {
            (Some(_), true) => {
                return Err(Error::InvalidArgument(format!(
                    "`{name}`: give either a total or preserve_mean, not both"
                )))
            }
            (Some(t), false) => Some(t),
            (None, true) => Some(n_m as f64 * d.observed_mean(var).unwrap_or(f64::NAN)),
            (None, false) => None,
        };
        if let Some(t) = total {
            if !t.is_finite() {
                return Err(Error::InvalidArgument(format!("`{name}`: total is not finite")));
            }
        }
        match vc.mode {
            ConstraintMode::TotalLinear | ConstraintMode::TotalRatio if total.is_none() => {
                return Err(Error::InvalidArgument(format!(
                    "`{name}`: mode {:?} needs a total or preserve_mean",
                    vc.mode
                )))
            }
            ConstraintMode::None | ConstraintMode::NonnegExp if total.is_some() => {
                return Err(Error::InvalidArgument(format!(
                    "`{name}`: a total needs mode total-linear or total-ratio"
                )))
            }
            _ => {}
        }
        if vc.mode != ConstraintMode::None && n_m == 0 {
            return Err(Error::InvalidArgument(format!("`{name}` has no missing cells to constrain")));
        }
        if vc.mode == ConstraintMode::TotalRatio && total.unwrap_or(0.0) <= 0.0 {
            return Err(Error::Infeasible(format!(
                "`{name}`: the ratio form needs a positive total, got {}",
                total.unwrap_or(0.0)
            )));
        }
        modes.insert(var, (vc.mode, total));
    }

    let mut bounds = BTreeMap::new();
    for lb in &spec.lower_bounds {
        let var = d.column_index(&lb.variable)?;
        if lb.row == 0 || lb.row > d.n_rows() || d.is_observed(lb.row - 1, var) {
            return Err(Error::InvalidArgument(format!(
                "lower bound on {}@{}: not a missing cell",
                lb.variable, lb.row
            )));
        }
        if !lb.bound.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lower bound on {}@{} is not finite",
                lb.variable, lb.row
            )));
        }
        let cell = Cell::new(lb.row - 1, var);
        let b = bounds.entry(cell).or_insert(f64::NEG_INFINITY);
        *b = f64::max(*b, lb.bound);
    }

    // feasibility before anything is solved
    for (&var, &(mode, total)) in &modes {
        let Some(t) = total else { continue };
        let rows = d.missing_rows(var);
        let floor: f64 = rows
            .iter()
            .map(|&i| {
                let b = bounds.get(&Cell::new(i, var)).copied().unwrap_or(f64::NEG_INFINITY);
                if mode == ConstraintMode::TotalRatio {
                    b.max(0.0)
                } else {
                    b
                }
            })
            .sum();
        if t < floor {
            return Err(Error::Infeasible(format!(
                "`{}`: total {t} is below the sum of lower bounds {floor}",
                names[var]
            )));
        }
    }
    for cell in bounds.keys() {
        if let Some(&(mode, _)) = modes.get(&cell.var) {
            if mode != ConstraintMode::None {
                return Err(Error::Unsupported(format!(
                    "lower bound on {} combined with mode {mode:?}; bounds apply to unconstrained cells only",
                    cell.label(names)
                )));
            }
        }
    }
    Ok(ResolvedConstraints { modes, bounds })
}

/// Solves the concatenated system under a constraint spec.
///
/// Bounds are enforced by projected Levenberg–Marquardt steps; cells held on
/// a bound report a standard error of 0. Reparameterized cells get
/// delta-method standard errors.
///
/// The search starts from the unconstrained optimum (itself started from the
/// complete-case fits), mapped into the constrained parameterization.
pub fn constrained_nls(sys: &ConcatenatedSystem, spec: &ConstraintSpec, opts: &NlsOptions) -> Result<NlsResult> {
    let warm = nls::solve_concatenated(sys, &InitPolicy::CompleteCase, &NlsOptions { bounds: Vec::new(), ..opts.clone() })?;
    let init = if warm.converged {
        InitPolicy::Theta(warm.theta)
    } else {
        InitPolicy::CompleteCase
    };
    constrained_nls_from(sys, spec, &init, opts)
}

pub fn constrained_nls_from(
    sys: &ConcatenatedSystem,
    spec: &ConstraintSpec,
    init: &InitPolicy,
    opts: &NlsOptions,
) -> Result<NlsResult> {
    let d = sys.data();
    let rc = resolve(d, spec)?;
    let mut builder = ParamMap::builder(sys);
    for k in 0..sys.n_coefficients() {
        builder.single(k, CellTransform::Identity);
    }
    let mut grouped: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (m, c) in sys.cells().iter().enumerate() {
        grouped.entry(c.var).or_default().push(sys.n_coefficients() + m);
    }
    for (var, thetas) in grouped {
        let (mode, total) = rc.modes.get(&var).copied().unwrap_or((ConstraintMode::None, None));
        match mode {
            ConstraintMode::None => thetas.iter().for_each(|&k| builder.single(k, CellTransform::Identity)),
            ConstraintMode::NonnegExp => thetas.iter().for_each(|&k| builder.single(k, CellTransform::Exp)),
            ConstraintMode::TotalLinear | ConstraintMode::TotalRatio if thetas.len() == 1 => {
                builder.fixed(thetas[0], total.expect("resolved total"))
            }
            ConstraintMode::TotalLinear => builder.total_linear(thetas, total.expect("resolved total")),
            ConstraintMode::TotalRatio => builder.total_ratio(thetas, total.expect("resolved total")),
        }
    }
    let map = builder.finish();

    let mut lower = vec![f64::NEG_INFINITY; map.n_phi()];
    let mut upper = vec![f64::INFINITY; map.n_phi()];
    for (cell, &b) in &rc.bounds {
        let k = sys.cell_param(cell.row, cell.var).expect("bounded cell is missing");
        let j = map.phi_index(k).expect("bounded cell is a free parameter");
        lower[j] = b;
    }
    for b in &opts.bounds {
        let j = map.phi_index(b.param).ok_or_else(|| {
            Error::Unsupported(format!("bound on parameter {} that the constraints reparameterize", b.param))
        })?;
        lower[j] = lower[j].max(b.lower);
        upper[j] = upper[j].min(b.upper);
    }
    let theta0 = nls::initial_theta(sys, init)?;
    nls::solve_mapped(sys, &map, &theta0, &lower, &upper, opts)
}

/// Closed-form imputation of missing responses that must sum to `total`.
///
/// Each point is the complete-case prediction shifted by the common amount
/// that makes the set add up: `ŷ_i = x_i b_o + (T − Σ_j x_j b_o)/n_m`. The
/// standard error treats the point as `x̃_i b_o + T/n_m` with
/// `x̃_i = x_i − x̄_m`, giving `σ̂² ((1 − 1/n_m) + x̃_iᵀ(XᵀX)⁻¹x̃_i)`.
pub fn impute_with_total(d: &Dataset, response: usize, predictors: &[usize], total: f64) -> Result<ImputationSet> {
    closed_form::check_response_only(d, response, predictors)?;
    let miss = d.missing_rows(response);
    if miss.is_empty() {
        return Err(Error::InvalidArgument("nothing to constrain: the response has no missing values".into()));
    }
    let base = closed_form::impute_closed_form(d, response, predictors)?;
    let fit = base.fit;
    let n_m = miss.len();
    let xm = ols::design_matrix(d, &miss, predictors);
    let preds = &xm * fit.coefficient_vector();
    let shift = (total - preds.sum()) / n_m as f64;
    let xbar = DVector::from_fn(xm.ncols(), |j, _| xm.column(j).mean());

    let mut cells = Vec::with_capacity(n_m);
    let mut running = 0.0;
    for (m, &row) in miss.iter().enumerate() {
        let point = if predictors.is_empty() {
            // no covariates: every cell gets the same share
            total / n_m as f64
        } else if m + 1 == n_m {
            // the last cell closes the sum exactly
            total - running
        } else {
            preds[m] + shift
        };
        running += point;
        let xt = xm.row(m).transpose() - &xbar;
        let q = (xt.transpose() * &fit.xtx_inv * &xt)[(0, 0)];
        let var = fit.sigma2 * ((1.0 - 1.0 / n_m as f64) + q);
        cells.push(ImputedCell {
            cell: Cell::new(row, response),
            point,
            se: var.max(0.0).sqrt(),
        });
    }
    Ok(ImputationSet {
        cells,
        fit,
        notes: vec![format!("points constrained to sum to {total}")],
    })
}

fn check_keys<K: Ord + std::fmt::Debug>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> Result<()> {
    let ka: BTreeSet<&K> = a.keys().collect();
    let kb: BTreeSet<&K> = b.keys().collect();
    if ka != kb {
        let only: Vec<String> = ka.symmetric_difference(&kb).map(|k| format!("{k:?}")).collect();
        return Err(Error::InvalidArgument(format!("cell sets differ: {}", only.join(", "))));
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

/// Mean squared difference between matching cells.
pub fn mse<K: Ord + std::fmt::Debug>(imputed: &BTreeMap<K, f64>, truth: &BTreeMap<K, f64>) -> Result<f64> {
    check_keys(imputed, truth)?;
    let ss: f64 = imputed.iter().map(|(k, v)| (v - truth[k]).powi(2)).sum();
    Ok(ss / imputed.len() as f64)
}

/// Root mean squared difference between matching cells.
pub fn rmse<K: Ord + std::fmt::Debug>(imputed: &BTreeMap<K, f64>, truth: &BTreeMap<K, f64>) -> Result<f64> {
    mse(imputed, truth).map(f64::sqrt)
}

/// Values of `truth` at every cell missing in `d`, keyed by `VAR@row`.
pub fn truth_at_missing(d: &Dataset, truth: &Dataset) -> Result<BTreeMap<String, f64>> {
    if truth.names() != d.names() || truth.n_rows() != d.n_rows() {
        return Err(Error::InvalidArgument(
            "truth file must have the same columns and rows as the data".into(),
        ));
    }
    d.missing_cells()
        .into_iter()
        .map(|c| {
            truth
                .get(c.row, c.var)
                .map(|v| (c.label(d.names()), v))
                .ok_or_else(|| Error::InvalidArgument(format!("truth file is missing {}", c.label(d.names()))))
        })
        .collect()
}

impl NlsResult {
    /// Point estimates keyed by `VAR@row`.
    pub fn labelled_points(&self) -> BTreeMap<String, f64> {
        self.imputations
            .iter()
            .map(|c| (format!("{}@{}", c.variable, c.row), c.point))
            .collect()
    }
}
