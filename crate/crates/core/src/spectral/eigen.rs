use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ordering::reverse_cuthill_mckee;
use super::SpectralBasis;
use crate::error::{Error, Result};
use crate::mesh::{MassMatrix, StiffnessMatrix};

/// Solver knobs for [`eigendecomposition_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Meshes up to this many vertices use a dense symmetric eigensolve.
    pub dense_limit: usize,
    /// Relative residual `|S x - l M x|_{M^-1} / (l + shift)` at convergence.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            dense_limit: 600,
            tolerance: 1e-10,
            max_iterations: 400,
            seed: 0x5eed,
        }
    }
}

/// `k` smallest eigenpairs of `S psi = lambda M psi`, M-orthonormal and
/// ascending, with each eigenvector's largest-magnitude entry positive.
pub fn eigendecomposition(
    mass: &MassMatrix,
    stiffness: &StiffnessMatrix,
    k: usize,
) -> Result<SpectralBasis> {
    eigendecomposition_with(mass, stiffness, k, &EigenOptions::default())
}

pub fn eigendecomposition_with(
    mass: &MassMatrix,
    stiffness: &StiffnessMatrix,
    k: usize,
    options: &EigenOptions,
) -> Result<SpectralBasis> {
    let m = mass.len();
    if stiffness.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "mass has {m} entries but stiffness is {0}x{0}",
            stiffness.dim()
        )));
    }
    if k == 0 || k > m {
        return Err(Error::OutOfRange {
            what: "eigenpair count",
            value: k,
            limit: m,
        });
    }
    let subspace = subspace_size(k, m);
    let (mut values, mut vectors) = if m <= options.dense_limit || 2 * subspace >= m {
        dense_eigenpairs(mass, stiffness, k)
    } else {
        subspace_iteration(mass, stiffness, k, subspace, options)?
    };
    for v in values.iter_mut() {
        // roundoff around the constant kernel
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    fix_signs(&mut vectors);
    values.truncate(k);
    Ok(SpectralBasis::from_parts(
        values,
        vectors,
        Arc::new(mass.clone()),
    ))
}

fn subspace_size(k: usize, m: usize) -> usize {
    (2 * k).max(k + 16).min(m)
}

fn dense_eigenpairs(
    mass: &MassMatrix,
    stiffness: &StiffnessMatrix,
    k: usize,
) -> (Vec<f64>, DMatrix<f64>) {
    let m = mass.len();
    let inv_sqrt: Vec<f64> = mass.diagonal().iter().map(|a| 1.0 / a.sqrt()).collect();
    let mut a = stiffness.to_dense();
    for j in 0..m {
        for i in 0..m {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    // exact symmetry for the solver
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let order = ascending_order(eig.eigenvalues.as_slice());
    let values = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m, k, |r, c| eig.eigenvectors[(r, order[c])] * inv_sqrt[r]);
    (values, vectors)
}

fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Largest-magnitude entry of every column made positive.
pub(crate) fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Cholesky factor of `S + shift M` in reverse Cuthill-McKee order.
struct ShiftedSolver {
    perm: Vec<usize>,
    cholesky: CscCholesky<f64>,
}

impl ShiftedSolver {
    fn new(mass: &MassMatrix, stiffness: &StiffnessMatrix, shift: f64) -> Result<Self> {
        let s = stiffness.matrix();
        let m = s.nrows();
        let mut adjacency = vec![Vec::new(); m];
        for (i, j, _) in s.triplet_iter() {
            if i != j {
                adjacency[i].push(j);
            }
        }
        let perm = reverse_cuthill_mckee(&adjacency);
        let mut inverse = vec![0; m];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut coo = CooMatrix::new(m, m);
        for (i, j, &v) in s.triplet_iter() {
            coo.push(inverse[i], inverse[j], v);
        }
        for (i, &a) in mass.diagonal().iter().enumerate() {
            coo.push(inverse[i], inverse[i], shift * a);
        }
        let shifted = CscMatrix::from(&coo);
        let cholesky = CscCholesky::factor(&shifted).map_err(|e| {
            Error::RankDeficient(format!("shifted stiffness factorization failed: {e:?}"))
        })?;
        Ok(ShiftedSolver { perm, cholesky })
    }

    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let permuted = DMatrix::from_fn(rhs.nrows(), rhs.ncols(), |r, c| rhs[(self.perm[r], c)]);
        let x = self.cholesky.solve(&permuted);
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for (new, &old) in self.perm.iter().enumerate() {
            for c in 0..rhs.ncols() {
                out[(old, c)] = x[(new, c)];
            }
        }
        out
    }
}

fn m_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    mass.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// Twice-applied modified Gram-Schmidt in the M inner product. Collapsed
/// columns are replaced by fresh random directions.
fn m_orthonormalize(x: &mut DMatrix<f64>, mass: &[f64], rng: &mut ChaCha8Rng) {
    let (m, p) = x.shape();
    for j in 0..p {
        loop {
            let original = m_dot(mass, x.column(j).as_slice(), x.column(j).as_slice()).sqrt();
            for _ in 0..2 {
                for i in 0..j {
                    let proj = m_dot(mass, x.column(i).as_slice(), x.column(j).as_slice());
                    let qi = x.column(i).into_owned();
                    x.column_mut(j).axpy(-proj, &qi, 1.0);
                }
            }
            let norm = m_dot(mass, x.column(j).as_slice(), x.column(j).as_slice()).sqrt();
            if norm.is_finite() && norm > 1e-10 * original {
                x.column_mut(j).scale_mut(1.0 / norm);
                break;
            }
            let fresh = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            x.set_column(j, &fresh);
        }
    }
}

fn subspace_iteration(
    mass: &MassMatrix,
    stiffness: &StiffnessMatrix,
    k: usize,
    p: usize,
    options: &EigenOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = mass.len();
    let weights = mass.diagonal();
    // eigenvalues scale like 1/area; a shift of that order keeps S + shift M
    // well conditioned without hurting separation
    let shift = 1.0 / mass.total();
    let solver = ShiftedSolver::new(mass, stiffness, shift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut x = DMatrix::from_fn(m, p, |_, _| rng.random_range(-1.0..1.0));
    x.column_mut(0).fill(1.0);
    m_orthonormalize(&mut x, weights, &mut rng);

    let mut residual = f64::INFINITY;
    for _ in 0..options.max_iterations {
        let mut y = solver.solve(&mass.apply(&x));
        m_orthonormalize(&mut y, weights, &mut rng);
        let sy = stiffness.apply(&y);
        let h = y.transpose() * &sy;
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let order = ascending_order(eig.eigenvalues.as_slice());
        let z = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        x = &y * &z;
        let sx = &sy * &z;

        residual = 0.0;
        for c in 0..k {
            let mut norm2 = 0.0;
            for r in 0..m {
                let d = sx[(r, c)] - theta[c] * weights[r] * x[(r, c)];
                norm2 += d * d / weights[r];
            }
            residual = f64::max(residual, norm2.sqrt() / (theta[c].abs() + shift));
        }
        if residual < options.tolerance {
            let vectors = x.columns(0, k).into_owned();
            return Ok((theta[..k].to_vec(), vectors));
        }
    }
    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{mass_matrix, stiffness_matrix};
    use crate::synthetic::{grid_patch, icosphere};

    fn m_orthonormality_error(basis: &SpectralBasis) -> f64 {
        let psi = basis.eigenfunctions();
        let gram = psi.transpose() * basis.mass().apply(psi);
        (gram - DMatrix::identity(basis.k(), basis.k())).amax()
    }

    #[test]
    fn rejects_bad_k() {
        let g = grid_patch(3, 3, |_, _| 0.0);
        let (mm, s) = (mass_matrix(&g).unwrap(), stiffness_matrix(&g).unwrap());
        assert!(eigendecomposition(&mm, &s, 0).is_err());
        assert!(matches!(
            eigendecomposition(&mm, &s, 10),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn first_pair_is_constant() {
        let g = grid_patch(5, 4, |x, y| 0.1 * x * y);
        let (mm, s) = (mass_matrix(&g).unwrap(), stiffness_matrix(&g).unwrap());
        let b = eigendecomposition(&mm, &s, 1).unwrap();
        assert!(b.eigenvalues()[0] <= 1e-6);
        let expected = 1.0 / mm.total().sqrt();
        for v in b.eigenfunctions().column(0).iter() {
            assert!((v - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let mesh = icosphere(3);
        let (mm, s) = (
            mass_matrix(&mesh).unwrap(),
            stiffness_matrix(&mesh).unwrap(),
        );
        let k = 12;
        let dense = eigendecomposition_with(
            &mm,
            &s,
            k,
            &EigenOptions {
                dense_limit: usize::MAX,
                ..Default::default()
            },
        )
        .unwrap();
        let sparse = eigendecomposition_with(
            &mm,
            &s,
            k,
            &EigenOptions {
                dense_limit: 0,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in dense.eigenvalues().iter().zip(sparse.eigenvalues()) {
            assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
        }
        assert!(m_orthonormality_error(&sparse) < 1e-9);
        // the eigenvalue-9 cluster (l = 3) starts at index 9; the first 9 span
        // complete eigenspaces so their projectors must agree
        let proj = |b: &SpectralBasis| {
            let psi = b.eigenfunctions().columns(0, 9).into_owned();
            &psi * psi.transpose()
        };
        assert!((proj(&dense) - proj(&sparse)).amax() < 1e-6);
    }

    #[test]
    fn signs_are_fixed() {
        let g = grid_patch(6, 5, |x, y| 0.05 * (x - y) * x);
        let (mm, s) = (mass_matrix(&g).unwrap(), stiffness_matrix(&g).unwrap());
        let b = eigendecomposition(&mm, &s, 6).unwrap();
        for col in b.eigenfunctions().column_iter() {
            let max = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let first = col.iter().find(|v| v.abs() == max).unwrap();
            assert!(*first > 0.0);
        }
        assert!(m_orthonormality_error(&b) < 1e-9);
    }
}
