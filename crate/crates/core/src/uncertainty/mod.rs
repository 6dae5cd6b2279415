//! Uncertainty beyond the analytic standard errors: normal-model multiple
//! imputation, the missing-data bootstrap, and the two-way additive model.

mod bootstrap;
mod mi;
mod two_way;

use serde::Serialize;

use crate::closed_form::ImputationSet;
use crate::dataset::Cell;
use crate::nls::NlsResult;

pub use bootstrap::{bootstrap_impute, BootstrapOptions, Estimator};
pub use mi::multiple_impute;
pub use two_way::{two_way_design, two_way_impute};

/// Which standard-error convention to carry over from an NLS result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeConvention {
    #[default]
    Raw,
    Adjusted,
}

/// A point estimate and its standard error for one missing cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointEstimate {
    #[serde(skip)]
    pub cell: Cell,
    pub label: String,
    pub point: f64,
    pub se: f64,
}

impl PointEstimate {
    pub fn from_set(set: &ImputationSet, names: &[String]) -> Vec<Self> {
        set.cells
            .iter()
            .map(|c| Self {
                cell: c.cell,
                label: c.cell.label(names),
                point: c.point,
                se: c.se,
            })
            .collect()
    }

    /// Cells whose standard error is unavailable get `NaN`.
    pub fn from_nls(res: &NlsResult, convention: SeConvention) -> Vec<Self> {
        res.imputations
            .iter()
            .map(|c| Self {
                cell: c.cell,
                label: format!("{}@{}", c.variable, c.row),
                point: c.point,
                se: match convention {
                    SeConvention::Raw => c.se_raw,
                    SeConvention::Adjusted => c.se_adjusted,
                }
                .unwrap_or(f64::NAN),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrawMethod {
    NormalMi,
    Bootstrap,
}

/// Draws for one cell, tagged with the replicate (or imputation) index each
/// came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDraws {
    pub cell: Cell,
    pub label: String,
    pub replicates: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawSummary {
    pub cell: String,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub p2_5: f64,
    pub p50: f64,
    pub p97_5: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationDraws {
    pub method: DrawMethod,
    pub seed: u64,
    pub cells: Vec<CellDraws>,
    /// Replicates tried, kept and thrown away (always equal to `M` kept for
    /// multiple imputation).
    pub attempted: usize,
    pub accepted: usize,
    pub discarded: usize,
}

impl ImputationDraws {
    pub fn summary(&self) -> Vec<DrawSummary> {
        self.cells.iter().map(|c| summarize(&c.label, &c.values)).collect()
    }

    pub fn cell(&self, label: &str) -> Option<&CellDraws> {
        self.cells.iter().find(|c| c.label == label)
    }

    /// Long format `cell,replicate,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,replicate,value\n");
        for c in &self.cells {
            for (r, v) in c.replicates.iter().zip(&c.values) {
                out.push_str(&format!("{},{},{}\n", c.label, r, v));
            }
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "seed": self.seed,
            "attempted": self.attempted,
            "accepted": self.accepted,
            "discarded": self.discarded,
            "cells": self.summary(),
        })
    }
}

/// Mean, sample standard deviation and linearly interpolated percentiles.
pub fn summarize(label: &str, values: &[f64]) -> DrawSummary {
    let n = values.len();
    if n == 0 {
        return DrawSummary {
            cell: label.to_string(),
            count: 0,
            mean: f64::NAN,
            sd: f64::NAN,
            p2_5: f64::NAN,
            p50: f64::NAN,
            p97_5: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    DrawSummary {
        cell: label.to_string(),
        count: n,
        mean,
        sd,
        p2_5: quantile(&sorted, 0.025),
        p50: quantile(&sorted, 0.5),
        p97_5: quantile(&sorted, 0.975),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_small_sample() {
        let s = summarize("a", &[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(s.count, 4);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.p50, 2.5);
        assert!((s.p2_5 - 1.075).abs() < 1e-12);
        assert!((s.p97_5 - 3.925).abs() < 1e-12);
        let one = summarize("b", &[7.0]);
        assert_eq!((one.sd, one.p2_5, one.p97_5), (0.0, 7.0, 7.0));
        assert!(summarize("c", &[]).mean.is_nan());
    }
}
