use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{CellDraws, DrawMethod, ImputationDraws, PointEstimate};
use crate::error::{Error, Result};

/// `m` independent normal draws per cell, centered on the point estimate
/// with the standard error as spread. Each cell uses its own ChaCha stream,
/// so adding or removing cells leaves the other cells' draws unchanged.
pub fn multiple_impute(estimates: &[PointEstimate], m: usize, seed: u64) -> Result<ImputationDraws> {
    if m == 0 {
        return Err(Error::InvalidArgument("the number of imputations must be at least 1".into()));
    }
    let mut cells = Vec::with_capacity(estimates.len());
    for est in estimates {
        if !(est.se.is_finite() && est.se >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{}: standard error {} cannot drive a normal draw",
                est.label, est.se
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((est.cell.var as u64) << 32) | est.cell.row as u64);
        let values: Vec<f64> = if est.se == 0.0 {
            vec![est.point; m]
        } else {
            let dist = Normal::new(est.point, est.se).expect("finite positive sd");
            (0..m).map(|_| dist.sample(&mut rng)).collect()
        };
        cells.push(CellDraws {
            cell: est.cell,
            label: est.label.clone(),
            replicates: (0..m).collect(),
            values,
        });
    }
    Ok(ImputationDraws {
        method: DrawMethod::NormalMi,
        seed,
        cells,
        attempted: m,
        accepted: m,
        discarded: 0,
    })
}
