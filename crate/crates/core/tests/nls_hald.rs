mod common;

use common::{HALD_COMPLETED_MEANS, HALD_REFERENCE};
use regem::dataset::{embedded_hald13, load_csv, DEFAULT_MISSING_TOKENS};
use regem::nls::{alternating_solve, build_concatenated, solve_concatenated, InitPolicy, NlsOptions};

#[test]
fn unconstrained_points_and_raw_se() {
    let sys = build_concatenated(&embedded_hald13()).unwrap();
    let res = solve_concatenated(&sys, &InitPolicy::CompleteCase, &NlsOptions::default()).unwrap();
    assert!(res.converged);
    for (v, r, point, se, _) in HALD_REFERENCE {
        let c = res.imputations.iter().find(|c| c.variable == v && c.row == r).unwrap();
        assert!((c.point - point).abs() < 5e-3, "{v}@{r}: {} vs {point}", c.point);
        // published SEs carry four significant digits
        let se_raw = c.se_raw.unwrap();
        assert!((se_raw - se).abs() < 1e-3 * se.max(1.0), "{v}@{r}: se {se_raw} vs {se}");
        let se_adj = c.se_adjusted.unwrap();
        assert!((se_adj - se_raw * 3f64.sqrt()).abs() < 1e-9 * se_adj);
    }
}

#[test]
fn completed_means() {
    let d = embedded_hald13();
    let sys = build_concatenated(&d).unwrap();
    let res = solve_concatenated(&sys, &InitPolicy::CompleteCase, &NlsOptions::default()).unwrap();
    let means = res.completed(&d).column_means();
    for (v, m) in HALD_COMPLETED_MEANS {
        let j = d.column_index(v).unwrap();
        assert!((means[j] - m).abs() < 1e-4, "{v}: {} vs {m}", means[j]);
    }
}

#[test]
fn alternating_agrees_with_marquardt() {
    let sys = build_concatenated(&embedded_hald13()).unwrap();
    let lm = solve_concatenated(&sys, &InitPolicy::CompleteCase, &NlsOptions::default()).unwrap();
    let opts = NlsOptions {
        max_iter: 10_000,
        ..NlsOptions::default()
    };
    let alt = alternating_solve(&sys, &InitPolicy::CompleteCase, &opts).unwrap();
    assert!(alt.converged);
    for (a, b) in lm.theta.iter().zip(&alt.theta) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn data_file_matches_embedded_copy() {
    let d = load_csv(common::workspace_path("data/hald13.csv"), &DEFAULT_MISSING_TOKENS).unwrap();
    assert_eq!(d, embedded_hald13());
}

#[test]
fn max_iter_exhaustion_reports_not_converged() {
    let sys = build_concatenated(&embedded_hald13()).unwrap();
    let opts = NlsOptions {
        max_iter: 2,
        ..NlsOptions::default()
    };
    let res = solve_concatenated(&sys, &InitPolicy::CompleteCase, &opts).unwrap();
    assert!(!res.converged);
    assert_eq!(res.iterations, 2);
}
