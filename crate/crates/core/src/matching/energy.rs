use nalgebra::DMatrix;

use super::{Correspondence, TransportPlan};
use crate::error::{Error, Result};

fn check_dims(f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<()> {
    if f.ncols() != g.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "feature dimensions differ: {} vs {}",
            f.ncols(),
            g.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// `C[i, j] = |F_i - G_j|^2`.
pub fn cost_matrix(f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(f, g)?;
    let (ft, gt) = (f.transpose(), g.transpose());
    let mut cost = DMatrix::zeros(f.nrows(), g.nrows());
    for (j, mut col) in cost.column_iter_mut().enumerate() {
        let gj = gt.column(j);
        for (i, c) in col.iter_mut().enumerate() {
            *c = sq_dist(ft.column(i).as_slice(), gj.as_slice());
        }
    }
    Ok(cost)
}

/// `sum_ij P_ij C_ij`, accumulated row by row (each row in column order).
pub(crate) fn transport_energy(cost: &DMatrix<f64>, weights: &DMatrix<f64>) -> f64 {
    let mut rows = vec![0.0; cost.nrows()];
    for (cj, wj) in cost.column_iter().zip(weights.column_iter()) {
        for ((row, &c), &w) in rows.iter_mut().zip(cj.iter()).zip(wj.iter()) {
            if w != 0.0 {
                *row += w * c;
            }
        }
    }
    rows.iter().sum()
}

/// `sum_ij P_ij |F_i - G_j|^2`.
pub fn match_energy(f: &DMatrix<f64>, g: &DMatrix<f64>, plan: &TransportPlan) -> Result<f64> {
    let w = plan.weights();
    if w.shape() != (f.nrows(), g.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "plan is {}x{}, features have {} and {} rows",
            w.nrows(),
            w.ncols(),
            f.nrows(),
            g.nrows()
        )));
    }
    Ok(transport_energy(&cost_matrix(f, g)?, w))
}

/// Energy of a hard map; equal bit for bit to [`match_energy`] on the
/// corresponding 0/1 plan.
pub fn match_energy_hard(f: &DMatrix<f64>, g: &DMatrix<f64>, pi: &Correspondence) -> Result<f64> {
    check_dims(f, g)?;
    if pi.len() != f.nrows() || pi.target_count() != g.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "map is {} -> {}, features have {} and {} rows",
            pi.len(),
            pi.target_count(),
            f.nrows(),
            g.nrows()
        )));
    }
    let (ft, gt) = (f.transpose(), g.transpose());
    let mut total = 0.0;
    for (i, &j) in pi.target_index().iter().enumerate() {
        let mut row = 0.0;
        row += 1.0 * sq_dist(ft.column(i).as_slice(), gt.column(j).as_slice());
        total += row;
    }
    Ok(total)
}

/// Entropy-regularized objective `<C, P> + lambda sum P log P`.
pub fn regularized_energy(cost: &DMatrix<f64>, weights: &DMatrix<f64>, entropy: f64) -> f64 {
    let neg_entropy: f64 = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| w * w.ln())
        .sum();
    transport_energy(cost, weights) + entropy * neg_entropy
}
