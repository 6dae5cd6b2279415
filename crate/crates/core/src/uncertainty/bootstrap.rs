use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CellDraws, DrawMethod, ImputationDraws};
use crate::closed_form::impute_closed_form;
use crate::constraints::{constrained_nls, ConstraintSpec, LowerBound};
use crate::dataset::{self, Cell, Dataset, PatternClass};
use crate::error::{Error, Result};
use crate::nls::{build_concatenated, solve_concatenated, InitPolicy, NlsOptions};

/// The estimator re-run on every bootstrap sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Estimator {
    /// Closed form when only one variable is incomplete (regressed on all
    /// the others), the concatenated system otherwise.
    #[default]
    Auto,
    ClosedForm { response: usize, predictors: Vec<usize> },
    Nls(NlsOptions),
    Constrained(ConstraintSpec, NlsOptions),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    /// Replicates to keep.
    pub b: usize,
    pub seed: u64,
    /// Replicates producing any estimate below this are discarded and
    /// redrawn.
    pub min_valid: Option<f64>,
    /// Keep drawing replicates until every missing cell has at least this
    /// many draws; `b` is then a minimum.
    pub target_count: Option<usize>,
    /// Hard cap on kept replicates in target-count mode.
    pub max_replicates: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            b: 1000,
            seed: 0,
            min_valid: None,
            target_count: None,
            max_replicates: 1_000_000,
        }
    }
}

/// Fraction of discarded replicates beyond which the run is abandoned.
const ABORT_FRACTION: f64 = 0.9;
/// Attempts made before the discard fraction is allowed to abort.
const MIN_ATTEMPTS_BEFORE_ABORT: usize = 10;

type ReplicateEstimates = Vec<(Cell, f64)>;

/// Resamples rows with replacement, re-imputes, and records the estimates
/// of every original missing cell that appears in the sample.
///
/// Replicate `r` draws its rows from ChaCha stream `r` of the seed, so the
/// result does not depend on how replicates are scheduled across threads.
/// A cell drawn more than once in a replicate contributes the average of its
/// copies' estimates.
pub fn bootstrap_impute(d: &Dataset, estimator: &Estimator, opts: &BootstrapOptions) -> Result<ImputationDraws> {
    if opts.b == 0 {
        return Err(Error::InvalidArgument("the number of bootstrap replicates must be at least 1".into()));
    }
    let pattern = dataset::validate(d)?;
    if let Estimator::Constrained(spec, _) = estimator {
        if let Some((name, _)) = spec.variables.iter().find(|(_, v)| v.total.is_some()) {
            return Err(Error::Unsupported(format!(
                "`{name}`: a fixed total does not carry over to resampled data; use preserve_mean"
            )));
        }
    }
    let estimator = resolve_estimator(d, estimator, pattern.class);
    let targets = d.missing_cells();
    let index: BTreeMap<Cell, usize> = targets.iter().enumerate().map(|(k, c)| (*c, k)).collect();
    let mut replicates: Vec<Vec<usize>> = vec![Vec::new(); targets.len()];
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); targets.len()];

    let mut attempted = 0usize;
    let mut accepted = 0usize;
    let mut discarded = 0usize;
    let done = |acc: usize, values: &Vec<Vec<f64>>| -> bool {
        if acc < opts.b {
            return false;
        }
        match opts.target_count {
            Some(t) => acc >= opts.max_replicates || values.iter().all(|v| v.len() >= t),
            None => true,
        }
    };

    while !done(accepted, &values) {
        let batch = (opts.b.saturating_sub(accepted)).max(rayon::current_num_threads() * 4);
        let results: Vec<Option<ReplicateEstimates>> = (attempted..attempted + batch)
            .into_par_iter()
            .map(|r| run_replicate(d, &estimator, opts, r as u64))
            .collect();
        for res in results {
            if done(accepted, &values) {
                break;
            }
            attempted += 1;
            match res {
                Some(est) => {
                    for (cell, v) in est {
                        let k = index[&cell];
                        replicates[k].push(attempted - 1);
                        values[k].push(v);
                    }
                    accepted += 1;
                }
                None => {
                    log::debug!("bootstrap replicate {} discarded", attempted - 1);
                    discarded += 1;
                }
            }
        }
        if attempted >= MIN_ATTEMPTS_BEFORE_ABORT && discarded as f64 > ABORT_FRACTION * attempted as f64 {
            return Err(Error::BootstrapAborted { attempted, discarded });
        }
    }
    log::info!("bootstrap: {accepted} replicates kept, {discarded} discarded");

    let names = d.names();
    let cells = targets
        .iter()
        .zip(replicates.into_iter().zip(values))
        .map(|(c, (replicates, values))| CellDraws {
            cell: *c,
            label: c.label(names),
            replicates,
            values,
        })
        .collect();
    Ok(ImputationDraws {
        method: DrawMethod::Bootstrap,
        seed: opts.seed,
        cells,
        attempted,
        accepted,
        discarded,
    })
}

fn resolve_estimator(d: &Dataset, est: &Estimator, class: PatternClass) -> Estimator {
    match est {
        Estimator::Auto => {
            let incomplete: Vec<usize> = (0..d.n_cols()).filter(|&j| !d.missing_rows(j).is_empty()).collect();
            if class == PatternClass::ResponseOnly && incomplete.len() == 1 {
                let response = incomplete[0];
                Estimator::ClosedForm {
                    response,
                    predictors: (0..d.n_cols()).filter(|&j| j != response).collect(),
                }
            } else {
                Estimator::Nls(NlsOptions::default())
            }
        }
        other => other.clone(),
    }
}

/// Moves per-cell bounds onto every copy of their row in a resample.
fn remap_bounds(spec: &ConstraintSpec, rows: &[usize]) -> ConstraintSpec {
    let lower_bounds = spec
        .lower_bounds
        .iter()
        .flat_map(|lb| {
            rows.iter()
                .enumerate()
                .filter(move |(_, &orig)| orig + 1 == lb.row)
                .map(move |(j, _)| LowerBound {
                    row: j + 1,
                    ..lb.clone()
                })
        })
        .collect();
    ConstraintSpec {
        variables: spec.variables.clone(),
        lower_bounds,
    }
}

/// Draws the rows of replicate `r`.
pub(crate) fn resample_rows(n: usize, seed: u64, r: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// `None` when the replicate cannot be fitted or violates `min_valid`.
fn run_replicate(d: &Dataset, est: &Estimator, opts: &BootstrapOptions, r: u64) -> Option<ReplicateEstimates> {
    let rows = resample_rows(d.n_rows(), opts.seed, r);
    let sample = d.select_rows(&rows);
    let fills: Vec<(Cell, f64)> = match est {
        Estimator::ClosedForm { response, predictors } => {
            impute_closed_form(&sample, *response, predictors).ok()?.fills()
        }
        Estimator::Nls(o) => {
            if sample.missing_cells().is_empty() {
                Vec::new()
            } else {
                let sys = build_concatenated(&sample).ok()?;
                let res = solve_concatenated(&sys, &InitPolicy::CompleteCase, o).ok()?;
                if !res.converged {
                    return None;
                }
                res.fills()
            }
        }
        Estimator::Constrained(spec, o) => {
            if sample.missing_cells().is_empty() {
                Vec::new()
            } else {
                let sys = build_concatenated(&sample).ok()?;
                let res = constrained_nls(&sys, &remap_bounds(spec, &rows), o).ok()?;
                if !res.converged {
                    return None;
                }
                res.fills()
            }
        }
        Estimator::Auto => unreachable!("resolved before sampling"),
    };
    if fills.iter().any(|(_, v)| !v.is_finite()) {
        return None;
    }
    if let Some(min) = opts.min_valid {
        if fills.iter().any(|(_, v)| *v < min) {
            return None;
        }
    }
    // average duplicated rows back onto their original cell
    let mut acc: BTreeMap<Cell, (f64, usize)> = BTreeMap::new();
    for (c, v) in fills {
        let e = acc.entry(Cell::new(rows[c.row], c.var)).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    Some(acc.into_iter().map(|(c, (s, k))| (c, s / k as f64)).collect())
}
