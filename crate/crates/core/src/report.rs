//! Versioned JSON run reports shared by every estimator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::closed_form::ImputationSet;
use crate::em::EmOutcome;
use crate::error::{Error, Result};
use crate::nls::NlsResult;
use crate::uncertainty::ImputationDraws;

pub const SCHEMA_VERSION: u32 = 1;

/// Convention order used when a single standard error has to be picked.
pub const SE_PREFERENCE: [&str; 5] = ["prediction", "raw", "adjusted", "bootstrap-sd", "mi-sd"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    /// `VAR@row`, 1-based.
    pub cell: String,
    pub variable: String,
    pub row: usize,
    pub point: f64,
    /// Standard errors keyed by convention (`prediction`, `raw`,
    /// `adjusted`, `bootstrap-sd`, `mi-sd`). `null` when unavailable.
    pub se: BTreeMap<String, Option<f64>>,
}

impl ReportCell {
    pub fn preferred_se(&self) -> Option<f64> {
        SE_PREFERENCE
            .iter()
            .find_map(|k| self.se.get(*k))
            .or_else(|| self.se.values().next())
            .copied()
            .flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub method: String,
    pub metadata: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<Convergence>,
    pub cells: Vec<ReportCell>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub details: Value,
}

/// Which NLS standard-error conventions a report carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DfChoice {
    Raw,
    Adjusted,
    #[default]
    Both,
}

impl std::str::FromStr for DfChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(DfChoice::Raw),
            "adjusted" => Ok(DfChoice::Adjusted),
            "both" => Ok(DfChoice::Both),
            other => Err(Error::InvalidArgument(format!("unknown df convention `{other}`"))),
        }
    }
}

fn split_label(label: &str) -> (String, usize) {
    let (v, r) = label.rsplit_once('@').expect("cell labels are VAR@row");
    (v.to_string(), r.parse().expect("cell labels carry a row number"))
}

impl Report {
    pub fn new(method: &str) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            method: method.to_string(),
            metadata: BTreeMap::new(),
            convergence: None,
            cells: Vec::new(),
            notes: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    /// Closed-form style results: one prediction standard error per cell.
    pub fn from_imputation_set(method: &str, set: &ImputationSet, names: &[String]) -> Self {
        let mut r = Self::new(method);
        r.cells = set
            .cells
            .iter()
            .map(|c| ReportCell {
                cell: c.cell.label(names),
                variable: names[c.cell.var].clone(),
                row: c.cell.row + 1,
                point: c.point,
                se: BTreeMap::from([("prediction".to_string(), Some(c.se))]),
            })
            .collect();
        r.notes = set.notes.clone();
        r.details = serde_json::json!({
            "coefficients": set.fit.coefficients,
            "sigma2": set.fit.sigma2,
            "df": set.fit.df,
        });
        r
    }

    pub fn from_em(out: &EmOutcome, names: &[String]) -> Self {
        let mut r = Self::from_imputation_set("em", &out.imputations, names);
        let last = out.trace.iterations.last();
        r.convergence = Some(Convergence {
            converged: out.trace.converged,
            iterations: out.trace.final_tau,
            sse: last.map(|it| it.sse),
            gradient_norm: None,
        });
        r.details = serde_json::json!({
            "coefficients": out.coefficients,
            "final_tau": out.trace.final_tau,
            "neg2ll": last.map(|it| it.neg2ll),
        });
        r
    }

    pub fn from_nls(method: &str, res: &NlsResult, df: DfChoice) -> Self {
        let mut r = Self::new(method);
        r.cells = res
            .imputations
            .iter()
            .map(|c| {
                let mut se = BTreeMap::new();
                if df != DfChoice::Adjusted {
                    se.insert("raw".to_string(), c.se_raw);
                }
                if df != DfChoice::Raw {
                    se.insert("adjusted".to_string(), c.se_adjusted);
                }
                ReportCell {
                    cell: format!("{}@{}", c.variable, c.row),
                    variable: c.variable.clone(),
                    row: c.row,
                    point: c.point,
                    se,
                }
            })
            .collect();
        r.convergence = Some(Convergence {
            converged: res.converged,
            iterations: res.iterations,
            sse: Some(res.sse),
            gradient_norm: Some(res.gradient_norm),
        });
        r.details = serde_json::json!({
            "equations": res.equations,
            "df": res.df,
            "n_stacked_rows": res.n_stacked_rows,
            "n_blocks": res.n_blocks,
            "active_bounds": res.active_bounds,
        });
        r
    }

    /// Draw-based results: point = draw mean, se = draw standard deviation.
    pub fn from_draws(method: &str, draws: &ImputationDraws) -> Self {
        let key = match draws.method {
            crate::uncertainty::DrawMethod::Bootstrap => "bootstrap-sd",
            crate::uncertainty::DrawMethod::NormalMi => "mi-sd",
        };
        let summary = draws.summary();
        let mut r = Self::new(method);
        r.cells = summary
            .iter()
            .map(|s| {
                let (variable, row) = split_label(&s.cell);
                ReportCell {
                    cell: s.cell.clone(),
                    variable,
                    row,
                    point: s.mean,
                    se: BTreeMap::from([(key.to_string(), (s.count > 0).then_some(s.sd))]),
                }
            })
            .collect();
        r.details = draws.summary_json();
        r
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(s)?;
        if r.schema != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "report schema {} is not supported (expected {SCHEMA_VERSION})",
                r.schema
            )));
        }
        Ok(r)
    }

    pub fn cell(&self, label: &str) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.cell == label)
    }
}

/// Long-format `cell,method,point,se` table from two or more reports over
/// the same cells. The standard error column takes the first convention a
/// report carries in [`SE_PREFERENCE`] order; repeated method names get a
/// `#k` suffix.
pub fn compare_reports(reports: &[Report]) -> Result<String> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument("compare needs at least two reports".into()));
    }
    let cells_of = |r: &Report| -> Vec<String> {
        let mut v: Vec<String> = r.cells.iter().map(|c| c.cell.clone()).collect();
        v.sort();
        v
    };
    let reference = cells_of(&reports[0]);
    for r in &reports[1..] {
        if cells_of(r) != reference {
            return Err(Error::InvalidArgument(format!(
                "reports `{}` and `{}` cover different cells",
                reports[0].method, r.method
            )));
        }
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = String::from("cell,method,point,se\n");
    for r in reports {
        let k = seen.entry(&r.method).or_insert(0);
        *k += 1;
        let method = if *k == 1 {
            r.method.clone()
        } else {
            format!("{}#{}", r.method, k)
        };
        for c in &r.cells {
            let se = c.preferred_se();
            let se = se.map_or(String::new(), |v| v.to_string());
            out.push_str(&format!("{},{},{},{}\n", c.cell, method, c.point, se));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::impute_closed_form;
    use crate::dataset::Dataset;

    fn worked() -> (Dataset, ImputationSet) {
        let d = Dataset::from_rows(
            &["x", "y"],
            &[
                vec![Some(0.0), Some(0.0)],
                vec![Some(1.0), Some(2.0)],
                vec![Some(2.0), Some(1.0)],
                vec![Some(3.0), None],
            ],
        )
        .unwrap();
        let set = impute_closed_form(&d, 1, &[0]).unwrap();
        (d, set)
    }

    #[test]
    fn round_trip() {
        let (d, set) = worked();
        let r = Report::from_imputation_set("closed-form", &set, d.names()).with_meta("tol", 1e-10);
        let back = Report::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.cells[0].cell, "y@4");
        assert!((back.cells[0].se["prediction"].unwrap() - 5f64.sqrt()).abs() < 1e-12);
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["schema"], 1);
    }

    #[test]
    fn wrong_schema_rejected() {
        let (d, set) = worked();
        let mut r = Report::from_imputation_set("closed-form", &set, d.names());
        r.schema = 2;
        assert!(Report::from_json(&r.to_json()).is_err());
    }

    #[test]
    fn compare_layout_and_errors() {
        let (d, set) = worked();
        let a = Report::from_imputation_set("closed-form", &set, d.names());
        let csv = compare_reports(&[a.clone(), a.clone()]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "cell,method,point,se");
        assert!(lines[1].starts_with("y@4,closed-form,"));
        assert!(lines[2].starts_with("y@4,closed-form#2,"));
        assert_eq!(lines.len(), 3);
        assert!(compare_reports(std::slice::from_ref(&a)).is_err());
        let mut b = a.clone();
        b.cells.clear();
        assert!(compare_reports(&[a, b]).is_err());
    }
}
