use nalgebra::{DMatrix, SymmetricEigen};

use super::{all_pairs_distances, ShapeGraph};
use crate::error::{Error, Result};

/// Classical MDS of the graph's shortest-path distances into the plane.
///
/// Each axis is oriented so that node 0 has a nonnegative coordinate (the
/// first later node with a nonzero entry breaks a zero). Negative leading
/// eigenvalues are clamped to zero with a warning.
pub fn mds_embedding(graph: &ShapeGraph) -> Result<DMatrix<f64>> {
    let n = graph.len();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "MDS needs at least two nodes, got {n}"
        )));
    }
    let d = all_pairs_distances(graph);
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition(
            "graph distances are not all finite".into(),
        ));
    }
    let sq = d.map(|x| x * x);
    let row_mean: Vec<f64> = sq.row_iter().map(|r| r.mean()).collect();
    let total_mean = sq.mean();
    // -1/2 J D^2 J with J the centering matrix, written out entrywise
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + total_mean)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&c))
    });

    let mut coords = DMatrix::zeros(n, 2);
    for (axis, &e) in order.iter().take(2).enumerate() {
        let mut lambda = eig.eigenvalues[e];
        if lambda < 0.0 {
            if axis == 0 || lambda < -1e-9 * eig.eigenvalues.amax() {
                log::warn!("MDS eigenvalue {lambda:e} on axis {axis} is negative; clamped to zero");
            }
            lambda = 0.0;
        }
        let v = eig.eigenvectors.column(e);
        let sign = match v.iter().find(|x| x.abs() > 1e-12) {
            Some(&x) if x < 0.0 => -1.0,
            _ => 1.0,
        };
        for i in 0..n {
            coords[(i, axis)] = sign * v[i] * lambda.sqrt();
        }
    }
    // exact centering against rounding in the eigenvectors
    for mut col in coords.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(coords)
}
