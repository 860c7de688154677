use nalgebra::DMatrix;

use super::energy::sq_dist;
use super::Correspondence;
use crate::error::{Error, Result};

/// `pi(i) = argmin_j |source_i - target_j|^2`, ties to the smallest `j`.
pub fn nearest_neighbor_assignment(
    source: &DMatrix<f64>,
    target: &DMatrix<f64>,
) -> Result<Correspondence> {
    if source.ncols() != target.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "embedding dimensions differ: {} vs {}",
            source.ncols(),
            target.ncols()
        )));
    }
    if target.nrows() == 0 {
        return Err(Error::Precondition("empty target embedding".into()));
    }
    let (st, tt) = (source.transpose(), target.transpose());
    let index = st
        .column_iter()
        .map(|s| {
            let mut best = (f64::INFINITY, 0);
            for (j, t) in tt.column_iter().enumerate() {
                let d = sq_dist(s.as_slice(), t.as_slice());
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect();
    Correspondence::new(index, target.nrows())
}
