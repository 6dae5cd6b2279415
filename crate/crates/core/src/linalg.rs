//! Small dense symmetric solves used by every estimator.
//!
//! The systems here are tiny (normal matrices with a handful to a few dozen
//! columns), so a symmetric-pivoted Cholesky factorization is enough. A
//! pivot below `PIVOT_RTOL` times the largest pivot declares the matrix
//! singular.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const PIVOT_RTOL: f64 = 1e-12;

/// Symmetric-pivoted Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
    perm: Vec<usize>,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: a.ncols(),
            });
        }
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut largest = 0.0_f64;
        for k in 0..n {
            let (j, pivot) = (k..n)
                .map(|j| (j, w[(j, j)]))
                .fold((k, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            if k == 0 {
                largest = pivot;
            }
            if pivot.is_nan() || pivot <= 0.0 || pivot < PIVOT_RTOL * largest {
                return Err(Error::Singular(format!(
                    "pivot {k} of {n} is {pivot:.3e} against largest {largest:.3e}"
                )));
            }
            if j != k {
                w.swap_rows(k, j);
                w.swap_columns(k, j);
                perm.swap(k, j);
            }
            let lkk = pivot.sqrt();
            w[(k, k)] = lkk;
            for i in k + 1..n {
                w[(i, k)] /= lkk;
            }
            for c in k + 1..n {
                let lck = w[(c, k)];
                for r in c..n {
                    let v = w[(r, c)] - w[(r, k)] * lck;
                    w[(r, c)] = v;
                    w[(c, r)] = v;
                }
            }
        }
        let l = DMatrix::from_fn(n, n, |i, j| if i >= j { w[(i, j)] } else { 0.0 });
        Ok(Self { l, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = DVector::from_fn(n, |a, _| b[self.perm[a]]);
        // forward: L z = y
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        // backward: Lᵀ x = z
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        let mut x = DVector::zeros(n);
        for a in 0..n {
            x[self.perm[a]] = y[a];
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        symmetrize(&mut inv);
        inv
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
