#![allow(dead_code)]

/// Imputations for the 13-row cement data from the published comparison
/// table: `(variable, row, unconstrained, raw se, constrained)`.
pub const HALD_REFERENCE: [(&str, usize, f64, f64, f64); 15] = [
    ("X1", 10, 12.8907, 196.1, 12.8351),
    ("X1", 11, -0.4686, 190.8, 0.0),
    ("X1", 12, 9.9899, 185.9, 9.9935),
    ("X1", 13, 10.1054, 179.3, 10.0957),
    ("X2", 10, 65.8389, 538.2, 65.9877),
    ("X2", 11, 48.1963, 523.5, 46.9425),
    ("X2", 12, 68.0844, 510.2, 68.0745),
    ("X2", 13, 62.4285, 492.2, 62.4541),
    ("X4", 7, 0.8449, 0.4569, 0.8449),
    ("X4", 8, 37.8695, 0.4861, 37.8695),
    ("X4", 9, 19.8902, 0.3400, 19.8902),
    ("X4", 10, 14.4591, 366.3, 14.3657),
    ("X4", 11, 20.7966, 356.3, 21.5841),
    ("X4", 12, 8.1828, 347.2, 8.1891),
    ("X4", 13, 15.4429, 334.9, 15.4269),
];

pub const HALD_COMPLETED_MEANS: [(&str, f64); 3] = [("X1", 6.65518), ("X2", 49.96524), ("X4", 27.03739)];

pub fn workspace_path(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Standard errors of the bounded (X1@11 ≥ 0) solution, same cell order.
pub const HALD_CONSTRAINED_SE: [f64; 15] = [
    185.6, 0.0, 177.2, 170.9, 509.5, 111.8, 486.2, 468.9, 0.4335, 0.4611, 0.3225, 346.9, 148.4, 330.7, 318.9,
];

use proptest::prelude::*;
use proptest::sample::subsequence;
use regem::Dataset;

/// Random data set where only the last column (`y`) has missing values.
#[derive(Debug, Clone)]
pub struct ResponseOnly {
    pub data: Dataset,
    pub response: usize,
    pub predictors: Vec<usize>,
}

impl ResponseOnly {
    pub fn missing_rows(&self) -> Vec<usize> {
        self.data.missing_rows(self.response)
    }
}

/// `n ≤ max_n` rows, `1..=max_k` covariates, and enough observed rows for at
/// least two residual degrees of freedom.
pub fn response_only(max_n: usize, max_k: usize) -> impl Strategy<Value = ResponseOnly> {
    (8usize..=max_n, 1usize..=max_k).prop_flat_map(|(n, k)| {
        let max_m = (n / 2).min(n - k - 3).max(1);
        (
            proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, k), n),
            proptest::collection::vec(-3.0f64..3.0, k + 1),
            proptest::collection::vec(-2.0f64..2.0, n),
            subsequence((0..n).collect::<Vec<_>>(), 1..=max_m),
        )
            .prop_map(move |(xs, beta, noise, missing)| {
                let mut names: Vec<String> = (1..=k).map(|j| format!("x{j}")).collect();
                names.push("y".into());
                let rows: Vec<Vec<Option<f64>>> = xs
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let y = beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>() + noise[i];
                        let mut r: Vec<Option<f64>> = x.iter().map(|&v| Some(v)).collect();
                        r.push((!missing.contains(&i)).then_some(y));
                        r
                    })
                    .collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                ResponseOnly {
                    data: Dataset::from_rows(&refs, &rows).unwrap(),
                    response: k,
                    predictors: (0..k).collect(),
                }
            })
    })
}

/// Correlated multi-variable data with scattered missing cells. Every row
/// keeps at least one value and the first three rows stay complete.
pub fn scattered(max_n: usize, max_p: usize) -> impl Strategy<Value = Dataset> {
    (8usize..=max_n, 2usize..=max_p).prop_flat_map(|(n, p)| {
        (
            proptest::collection::vec(-5.0f64..5.0, n),
            proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, p), n),
            proptest::collection::vec(0.5f64..2.0, p),
            proptest::collection::vec(proptest::collection::vec(proptest::bool::weighted(0.15), p), n),
        )
            .prop_map(move |(latent, noise, load, miss)| {
                let names: Vec<String> = (1..=p).map(|j| format!("v{j}")).collect();
                let rows: Vec<Vec<Option<f64>>> = (0..n)
                    .map(|i| {
                        let all_gone = miss[i].iter().all(|&m| m);
                        (0..p)
                            .map(|j| {
                                let v = 10.0 + load[j] * latent[i] + noise[i][j];
                                let drop = i >= 3 && miss[i][j] && !(all_gone && j == 0);
                                (!drop).then_some(v)
                            })
                            .collect()
                    })
                    .collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                Dataset::from_rows(&refs, &rows).unwrap()
            })
    })
}

/// Least squares through an SVD, independent of the library's OLS path.
pub fn lstsq(x: &nalgebra::DMatrix<f64>, y: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    x.clone().svd(true, true).solve(y, 1e-14).unwrap()
}

/// `[1 X]` over the given rows of the listed columns.
pub fn design(d: &Dataset, rows: &[usize], cols: &[usize]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(rows.len(), cols.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            d.values()[(rows[i], cols[j - 1])]
        }
    })
}
