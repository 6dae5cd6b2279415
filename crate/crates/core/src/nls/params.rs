//! Maps from the optimizer's free vector φ to the system's parameters θ.
//!
//! Coefficients always pass through unchanged. Missing cells either pass
//! through, go through `exp`, or are grouped per variable under a known
//! total (linear elimination of the last cell, or the ratio form that keeps
//! every cell positive).

use nalgebra::{DMatrix, DVector};

use super::system::ConcatenatedSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellTransform {
    Identity,
    /// θ = e^φ
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Single {
        theta: usize,
        transform: CellTransform,
    },
    /// A cell pinned by its total (the only missing cell of its variable).
    Fixed { theta: usize, value: f64 },
    /// Last cell = total − Σ others.
    TotalLinear { thetas: Vec<usize>, total: f64 },
    /// θ_k = T e^{φ_k} / (1 + Σ e^φ), last = T / (1 + Σ e^φ).
    TotalRatio { thetas: Vec<usize>, total: f64 },
}

impl Block {
    fn n_phi(&self) -> usize {
        match self {
            Block::Single { .. } => 1,
            Block::Fixed { .. } => 0,
            Block::TotalLinear { thetas, .. } | Block::TotalRatio { thetas, .. } => thetas.len() - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamMap {
    n_theta: usize,
    n_coef: usize,
    /// `(block, first φ index)`
    blocks: Vec<(Block, usize)>,
    n_phi: usize,
}

impl ParamMap {
    pub fn identity(sys: &ConcatenatedSystem) -> Self {
        let mut b = ParamMapBuilder::new(sys);
        for k in 0..sys.n_params() {
            b.single(k, CellTransform::Identity);
        }
        b.finish()
    }

    pub(crate) fn builder(sys: &ConcatenatedSystem) -> ParamMapBuilder {
        ParamMapBuilder::new(sys)
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn theta(&self, phi: &DVector<f64>) -> DVector<f64> {
        let mut t = DVector::zeros(self.n_theta);
        for (block, s) in &self.blocks {
            match block {
                Block::Single { theta, transform } => {
                    t[*theta] = match transform {
                        CellTransform::Identity => phi[*s],
                        CellTransform::Exp => phi[*s].exp(),
                    };
                }
                Block::Fixed { theta, value } => t[*theta] = *value,
                Block::TotalLinear { thetas, total } => {
                    let m = thetas.len();
                    let mut rest = *total;
                    for j in 0..m - 1 {
                        t[thetas[j]] = phi[s + j];
                        rest -= phi[s + j];
                    }
                    t[thetas[m - 1]] = rest;
                }
                Block::TotalRatio { thetas, total } => {
                    let m = thetas.len();
                    let (shift, e) = stable_exp(&phi.as_slice()[*s..s + m - 1]);
                    let denom = (-shift).exp() + e.iter().sum::<f64>();
                    for j in 0..m - 1 {
                        t[thetas[j]] = total * e[j] / denom;
                    }
                    t[thetas[m - 1]] = total * (-shift).exp() / denom;
                }
            }
        }
        t
    }

    /// ∂θ/∂φ, `n_theta × n_phi`.
    pub fn dtheta_dphi(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n_theta, self.n_phi);
        for (block, s) in &self.blocks {
            match block {
                Block::Single { theta, transform } => {
                    g[(*theta, *s)] = match transform {
                        CellTransform::Identity => 1.0,
                        CellTransform::Exp => phi[*s].exp(),
                    };
                }
                Block::Fixed { .. } => {}
                Block::TotalLinear { thetas, .. } => {
                    let m = thetas.len();
                    for j in 0..m - 1 {
                        g[(thetas[j], s + j)] = 1.0;
                        g[(thetas[m - 1], s + j)] = -1.0;
                    }
                }
                Block::TotalRatio { thetas, total } => {
                    // with shares w_k = e^{φ_k}/D and w_last = 1/D:
                    // ∂θ_k/∂φ_j = T w_k (δ_kj − w_j), ∂θ_last/∂φ_j = −T w_last w_j
                    let m = thetas.len();
                    let (shift, e) = stable_exp(&phi.as_slice()[*s..s + m - 1]);
                    let denom = (-shift).exp() + e.iter().sum::<f64>();
                    let w: Vec<f64> = e.iter().map(|v| v / denom).collect();
                    let w_last = (-shift).exp() / denom;
                    for j in 0..m - 1 {
                        for k in 0..m - 1 {
                            let delta = if j == k { 1.0 } else { 0.0 };
                            g[(thetas[k], s + j)] = total * w[k] * (delta - w[j]);
                        }
                        g[(thetas[m - 1], s + j)] = -total * w_last * w[j];
                    }
                }
            }
        }
        g
    }

    /// Inverse map for a starting θ. Values incompatible with a transform
    /// (non-positive under `exp`, or not summing to the total) are nudged to
    /// a feasible point.
    pub fn phi_from_theta(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut phi = DVector::zeros(self.n_phi);
        for (block, s) in &self.blocks {
            match block {
                Block::Single { theta: k, transform } => {
                    phi[*s] = match transform {
                        CellTransform::Identity => theta[*k],
                        CellTransform::Exp => theta[*k].max(1e-3).ln(),
                    };
                }
                Block::Fixed { .. } => {}
                Block::TotalLinear { thetas, total } => {
                    // spread the discrepancy evenly so the start sums to the total
                    let m = thetas.len();
                    let sum: f64 = thetas.iter().map(|&k| theta[k]).sum();
                    let adj = (total - sum) / m as f64;
                    for j in 0..m - 1 {
                        phi[s + j] = theta[thetas[j]] + adj;
                    }
                }
                Block::TotalRatio { thetas, total } => {
                    let m = thetas.len();
                    let floor = total.abs() * 1e-3 / m as f64;
                    let v: Vec<f64> = thetas.iter().map(|&k| theta[k].max(floor)).collect();
                    for j in 0..m - 1 {
                        phi[s + j] = (v[j] / v[m - 1]).ln();
                    }
                }
            }
        }
        phi
    }

    /// φ index of a single (non-grouped) parameter.
    pub fn phi_index(&self, theta: usize) -> Option<usize> {
        self.blocks.iter().find_map(|(b, s)| match b {
            Block::Single { theta: k, .. } if *k == theta => Some(*s),
            _ => None,
        })
    }

    /// θ indices of missing-cell parameters whose φ is frozen.
    pub fn frozen_cells(&self, free: &[bool]) -> Vec<usize> {
        self.blocks
            .iter()
            .filter_map(|(b, s)| match b {
                Block::Single { theta, .. } if *theta >= self.n_coef && !free[*s] => Some(*theta),
                _ => None,
            })
            .collect()
    }
}

/// Exponentials scaled by `e^{-shift}` where `shift = max(0, max φ)`, so
/// the ratio form never overflows. Returns `(shift, e^{φ − shift})`.
fn stable_exp(phi: &[f64]) -> (f64, Vec<f64>) {
    let shift = phi.iter().copied().fold(0.0, f64::max);
    (shift, phi.iter().map(|p| (p - shift).exp()).collect())
}

pub(crate) struct ParamMapBuilder {
    n_theta: usize,
    n_coef: usize,
    blocks: Vec<(Block, usize)>,
    n_phi: usize,
}

impl ParamMapBuilder {
    fn new(sys: &ConcatenatedSystem) -> Self {
        Self {
            n_theta: sys.n_params(),
            n_coef: sys.n_coefficients(),
            blocks: Vec::new(),
            n_phi: 0,
        }
    }

    fn push(&mut self, b: Block) {
        let n = b.n_phi();
        self.blocks.push((b, self.n_phi));
        self.n_phi += n;
    }

    pub(crate) fn single(&mut self, theta: usize, transform: CellTransform) {
        self.push(Block::Single { theta, transform });
    }

    pub(crate) fn fixed(&mut self, theta: usize, value: f64) {
        self.push(Block::Fixed { theta, value });
    }

    /// Groups of one cell are [`fixed`](Self::fixed) instead; callers pass `m ≥ 2`.
    pub(crate) fn total_linear(&mut self, thetas: Vec<usize>, total: f64) {
        debug_assert!(thetas.len() >= 2);
        self.push(Block::TotalLinear { thetas, total });
    }

    pub(crate) fn total_ratio(&mut self, thetas: Vec<usize>, total: f64) {
        debug_assert!(thetas.len() >= 2);
        self.push(Block::TotalRatio { thetas, total });
    }

    pub(crate) fn finish(self) -> ParamMap {
        ParamMap {
            n_theta: self.n_theta,
            n_coef: self.n_coef,
            blocks: self.blocks,
            n_phi: self.n_phi,
        }
    }
}
