//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to
//! see the table; the test fails if any required criterion fails.

mod common;

use std::collections::BTreeMap;

use common::{design, lstsq, response_only, workspace_path, ResponseOnly, HALD_COMPLETED_MEANS, HALD_REFERENCE};
use nalgebra::{DMatrix, DVector};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use regem::closed_form::{build_ancova, monotone_bivariate_mle, solve_augmented_ols, BivariateMoments};
use regem::constraints::{constrained_nls, impute_with_total, mse, rmse, truth_at_missing, ConstraintMode, ConstraintSpec};
use regem::dataset::{embedded_hald13, load_csv, DEFAULT_MISSING_TOKENS};
use regem::em::{run_em, EmInit, EmOptions};
use regem::nls::{alternating_solve, build_concatenated, solve_concatenated, InitPolicy, NlsOptions, NlsResult};
use regem::ols::prediction_se;
use regem::uncertainty::{bootstrap_impute, multiple_impute, summarize, BootstrapOptions, Estimator, PointEstimate};
use regem::{impute_closed_form, Cell, Dataset};

struct Outcome {
    id: &'static str,
    stretch: bool,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome {
        id,
        stretch: false,
        pass,
        detail,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn samples<S: Strategy>(strategy: S, count: usize) -> Vec<S::Value> {
    let mut runner = TestRunner::deterministic();
    (0..count)
        .map(|_| strategy.new_tree(&mut runner).unwrap().current())
        .collect()
}

fn hald_free() -> NlsResult {
    let sys = build_concatenated(&embedded_hald13()).unwrap();
    solve_concatenated(&sys, &InitPolicy::CompleteCase, &NlsOptions::default()).unwrap()
}

fn hald_bounded() -> NlsResult {
    let sys = build_concatenated(&embedded_hald13()).unwrap();
    constrained_nls(&sys, &ConstraintSpec::lower_bound("X1", 11, 0.0), &NlsOptions::default()).unwrap()
}

fn c1_unconstrained() -> Outcome {
    let res = hald_free();
    let worst = HALD_REFERENCE
        .iter()
        .map(|(v, r, p, _, _)| (res.point(v, *r).unwrap() - p).abs())
        .fold(0.0, f64::max);
    check("1", res.converged && worst < 5e-3, format!("15 cells, max |Δ| = {worst:.2e}"))
}

fn c2_means() -> Outcome {
    let d = embedded_hald13();
    let means = hald_free().completed(&d).column_means();
    let worst = HALD_COMPLETED_MEANS
        .iter()
        .map(|(v, m)| (means[d.column_index(v).unwrap()] - m).abs())
        .fold(0.0, f64::max);
    check("2", worst < 1e-4, format!("completed means, max |Δ| = {worst:.2e}"))
}

fn c3_bounded() -> Outcome {
    let res = hald_bounded();
    let pinned = res.imputations.iter().find(|c| c.variable == "X1" && c.row == 11).unwrap();
    let worst = HALD_REFERENCE
        .iter()
        .map(|(v, r, _, _, p)| (res.point(v, *r).unwrap() - p).abs())
        .fold(0.0, f64::max);
    let sys = build_concatenated(&embedded_hald13()).unwrap();
    let spec = ConstraintSpec::default().with_mode("X1", ConstraintMode::NonnegExp, None);
    let exp = constrained_nls(&sys, &spec, &NlsOptions::default()).unwrap();
    let gap = exp
        .imputations
        .iter()
        .zip(&res.imputations)
        .map(|(a, b)| (a.point - b.point).abs())
        .fold(0.0, f64::max);
    let pass = pinned.point == 0.0 && pinned.se_raw == Some(0.0) && worst < 5e-3 && gap < 1e-3 && exp.converged;
    check(
        "3",
        pass,
        format!("X1@11 = {} (se {:?}), max |Δ| = {worst:.2e}, exp vs bound {gap:.2e}", pinned.point, pinned.se_raw),
    )
}

fn c4_bivariate() -> Outcome {
    let m = BivariateMoments {
        n: 10,
        n_obs: 8,
        sum_x_all: 130.0,
        mean_sq_x_all: 402.0 / 10.0,
        sum_x_obs: 108.0,
        sum_y_obs: 119.0,
        s_xx_obs: 384.0,
        s_yy_obs: 230.875,
        s_xy_obs: 199.5,
    };
    let r = monotone_bivariate_mle(&m).unwrap();
    let pass = (r.mu2 - 14.61523).abs() < 1e-4 && (r.sigma22 - 26.75407).abs() < 1e-4 && (r.sigma12 - 20.88516).abs() < 1e-5;
    check("4", pass, format!("mu2 {:.5}, sigma22 {:.5}, sigma12 {:.5}", r.mu2, r.sigma22, r.sigma12))
}

fn c5_prediction_se() -> Outcome {
    let se = prediction_se(10.6239, 0.05346).unwrap();
    check("5", (se - 3.34542).abs() < 1e-5, format!("se = {se:.5}"))
}

fn c6_response_only() -> Outcome {
    let mut failures = BTreeMap::<&str, usize>::new();
    for inst in samples(response_only(30, 4), 100) {
        let d = &inst.data;
        let default = run_em(d, inst.response, &inst.predictors, &EmOptions::default()).unwrap();
        if default.trace.final_tau != 0 || !default.trace.converged {
            *failures.entry("a").or_default() += 1;
        }
        let obs = d.observed_rows(inst.response);
        let y = DVector::from_iterator(obs.len(), obs.iter().map(|&i| d.values()[(i, inst.response)]));
        let oracle = lstsq(&design(d, &obs, &inst.predictors), &y);
        let opts = EmOptions {
            init: EmInit::Coefficients(vec![0.0; inst.predictors.len() + 1]),
            tol: 1e-14,
            max_iter: 100_000,
        };
        let far = run_em(d, inst.response, &inst.predictors, &opts).unwrap();
        if !far.coefficients.iter().zip(oracle.iter()).all(|(a, b)| close(*a, *b, 1e-8)) {
            *failures.entry("b").or_default() += 1;
        }
        let set = impute_closed_form(d, inst.response, &inst.predictors).unwrap();
        let aug = solve_augmented_ols(&build_ancova(d, inst.response, &inst.predictors).unwrap()).unwrap();
        let same = set
            .cells
            .iter()
            .enumerate()
            .all(|(m, c)| close(aug.b_m[m], c.point, 1e-10) && close(aug.s_bm[m], c.se, 1e-10));
        if !same {
            *failures.entry("c").or_default() += 1;
        }
    }
    check("6", failures.is_empty(), format!("100 instances, failures by part {failures:?}"))
}

fn kkt_fixed_beta(inst: &ResponseOnly, total: f64) -> Vec<f64> {
    let d = &inst.data;
    let obs = d.observed_rows(inst.response);
    let miss = inst.missing_rows();
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|&i| d.values()[(i, inst.response)]));
    let target = design(d, &miss, &inst.predictors) * lstsq(&design(d, &obs, &inst.predictors), &y);
    let m = miss.len();
    let k = DMatrix::from_fn(m + 1, m + 1, |i, j| match (i == m, j == m) {
        (false, false) => (i == j) as u8 as f64,
        (true, true) => 0.0,
        _ => 1.0,
    });
    let rhs = DVector::from_fn(m + 1, |i, _| if i == m { total } else { target[i] });
    k.lu().solve(&rhs).unwrap().rows(0, m).iter().copied().collect()
}

fn c7_known_total() -> Outcome {
    let mut bad = BTreeMap::<&str, usize>::new();
    for (k, inst) in samples(response_only(30, 4), 50).into_iter().enumerate() {
        let base: f64 = impute_closed_form(&inst.data, inst.response, &inst.predictors).unwrap().points().iter().sum();
        let total = base + (k as f64 - 25.0) * 0.7;
        let set = impute_with_total(&inst.data, inst.response, &inst.predictors, total).unwrap();
        let pts = set.points();
        if (pts.iter().sum::<f64>() - total).abs() > 1e-10 * total.abs().max(1.0) {
            *bad.entry("sum").or_default() += 1;
        }
        if !pts.iter().zip(kkt_fixed_beta(&inst, total)).all(|(p, o)| close(*p, o, 1e-8)) {
            *bad.entry("kkt").or_default() += 1;
        }
        let n = inst.data.n_rows();
        let rev: Vec<usize> = (0..n).rev().collect();
        let flipped = impute_with_total(&inst.data.select_rows(&rev), inst.response, &inst.predictors, total).unwrap();
        let invariant = set.cells.iter().all(|c| {
            let twin = flipped.cells.iter().find(|f| f.cell.row == n - 1 - c.cell.row).unwrap();
            close(c.point, twin.point, 1e-10)
        });
        if !invariant {
            *bad.entry("last-cell").or_default() += 1;
        }
    }
    let rows: Vec<Vec<Option<f64>>> = [Some(1.0), Some(4.0), None, None, Some(3.0), None, None]
        .iter()
        .map(|y| vec![*y, Some(0.0)])
        .collect();
    let d = Dataset::from_rows(&["y", "c"], &rows).unwrap();
    let shares = impute_with_total(&d, 0, &[], 10.0).unwrap().points();
    if shares != vec![2.5; 4] {
        *bad.entry("no-covariates").or_default() += 1;
    }
    check("7", bad.is_empty(), format!("50 instances + T/n_m case, failures {bad:?}"))
}

fn c8_degeneration() -> Outcome {
    let mut worst = 0.0f64;
    for inst in samples(response_only(30, 4), 50) {
        let closed = impute_closed_form(&inst.data, inst.response, &inst.predictors).unwrap();
        let sys = build_concatenated(&inst.data).unwrap();
        let res = solve_concatenated(&sys, &InitPolicy::CompleteCase, &NlsOptions::default()).unwrap();
        for c in &closed.cells {
            let p = res.imputation(c.cell).unwrap().point;
            worst = worst.max((p - c.point).abs() / c.point.abs().max(1.0));
        }
    }
    let sys = build_concatenated(&embedded_hald13()).unwrap();
    let lm = hald_free();
    let opts = NlsOptions {
        max_iter: 10_000,
        ..NlsOptions::default()
    };
    let alt = alternating_solve(&sys, &InitPolicy::CompleteCase, &opts).unwrap();
    let gap = lm.theta.iter().zip(&alt.theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        "8",
        worst < 1e-8 && gap < 1e-6 && alt.converged,
        format!("NLS vs closed form {worst:.2e} (50 instances), alternating vs LM on hald13 {gap:.2e}"),
    )
}

fn c9_jacobian() -> Outcome {
    let sys = build_concatenated(&embedded_hald13()).unwrap();
    let thetas = samples(proptest::collection::vec(-5.0f64..5.0, sys.n_params()), 50);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for t in thetas {
        let theta = DVector::from_vec(t);
        let jac = sys.jacobian(&theta);
        for k in 0..sys.n_params() {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (sys.residuals(&up) - sys.residuals(&down)) / (2.0 * h);
            for i in 0..fd.len() {
                worst = worst.max((jac[(i, k)] - fd[i]).abs() / jac[(i, k)].abs().max(1.0));
            }
        }
    }
    check("9", worst < 1e-6, format!("50 random θ, max relative gap {worst:.2e}"))
}

fn c10_stochastic() -> Outcome {
    let rows: Vec<Vec<Option<f64>>> = (0..30)
        .map(|i| {
            let x = i as f64 / 3.0;
            let y = 4.0 + 1.5 * x + ((i * 37) % 11) as f64 / 5.0 - 1.0;
            vec![Some(x), (![3, 8, 15, 21, 27].contains(&i)).then_some(y)]
        })
        .collect();
    let d = Dataset::from_rows(&["x", "y"], &rows).unwrap();
    let closed = impute_closed_form(&d, 1, &[0]).unwrap();
    let opts = BootstrapOptions {
        b: 2000,
        seed: 20240611,
        ..Default::default()
    };
    let draws = bootstrap_impute(&d, &Estimator::Auto, &opts).unwrap();
    let worst_z = closed
        .cells
        .iter()
        .map(|c| {
            let cd = draws.cells.iter().find(|x| x.cell == c.cell).unwrap();
            let s = summarize(&cd.label, &cd.values);
            (s.mean - c.point).abs() / (s.sd / (s.count as f64).sqrt())
        })
        .fold(0.0, f64::max);
    let deterministic = bootstrap_impute(&d, &Estimator::Auto, &opts).unwrap().to_csv() == draws.to_csv();

    let est = PointEstimate {
        cell: Cell::new(0, 0),
        label: "y@1".into(),
        point: 2.0,
        se: 5f64.sqrt(),
    };
    let mi = multiple_impute(std::slice::from_ref(&est), 100_000, 31).unwrap();
    let s = mi.summary().remove(0);
    let mean_ok = (s.mean - 2.0).abs() <= 3.0 * 5f64.sqrt() / 316.2;
    let sd_ok = (s.sd / 5f64.sqrt() - 1.0).abs() <= 0.02;
    let mi_same = multiple_impute(&[est], 100_000, 31).unwrap().to_csv() == mi.to_csv();
    check(
        "10",
        worst_z <= 3.0 && mean_ok && sd_ok && deterministic && mi_same,
        format!(
            "bootstrap max |z| {worst_z:.2} (B=2000), MI mean {:.4} sd {:.4} (M=1e5), seeded reruns identical: {}",
            s.mean,
            s.sd,
            deterministic && mi_same
        ),
    )
}

fn c11_truth() -> Vec<Outcome> {
    let path = workspace_path("data/hald13_truth.csv");
    if !path.exists() {
        return vec![Outcome {
            id: "11",
            stretch: true,
            pass: true,
            detail: "skipped: no truth file".into(),
        }];
    }
    let truth = truth_at_missing(&embedded_hald13(), &load_csv(path, &DEFAULT_MISSING_TOKENS).unwrap()).unwrap();
    let free = hald_free().labelled_points();
    let (m_free, r_free) = (mse(&free, &truth).unwrap(), rmse(&free, &truth).unwrap());

    let sys = build_concatenated(&embedded_hald13()).unwrap();
    let spec = ConstraintSpec::default()
        .with_mode("X1", ConstraintMode::TotalLinear, Some(43.0))
        .with_mode("X2", ConstraintMode::TotalLinear, Some(221.0))
        .with_mode("X4", ConstraintMode::TotalLinear, Some(156.0));
    let totals = constrained_nls(&sys, &spec, &NlsOptions::default()).unwrap().labelled_points();
    let (m_tot, r_tot) = (mse(&totals, &truth).unwrap(), rmse(&totals, &truth).unwrap());
    // the published table's figures are mean squared errors
    vec![
        Outcome {
            id: "11a",
            stretch: true,
            pass: (m_free - 61.93).abs() <= 0.5,
            detail: format!("unconstrained vs truth: MSE {m_free:.3} (RMSE {r_free:.3}), published 61.93"),
        },
        Outcome {
            id: "11b",
            stretch: true,
            pass: (m_tot - 45.19).abs() <= 0.5,
            detail: format!(
                "three known totals vs truth: MSE {m_tot:.3} (RMSE {r_tot:.3}), published 45.19; not reproducible from the printed data"
            ),
        },
    ]
}

#[test]
fn acceptance() {
    let mut all = vec![
        c1_unconstrained(),
        c2_means(),
        c3_bounded(),
        c4_bivariate(),
        c5_prediction_se(),
        c6_response_only(),
        c7_known_total(),
        c8_degeneration(),
        c9_jacobian(),
        c10_stochastic(),
    ];
    all.extend(c11_truth());
    for o in &all {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let kind = if o.stretch { " (stretch)" } else { "" };
        println!("{tag} criterion {}{kind}: {}", o.id, o.detail);
    }
    let required: Vec<&str> = all.iter().filter(|o| !o.stretch && !o.pass).map(|o| o.id).collect();
    assert!(required.is_empty(), "required criteria failed: {required:?}");
}
