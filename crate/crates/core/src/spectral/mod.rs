//! Laplace-Beltrami eigenbases, spectral smoothing, shell embeddings and
//! wave kernel signatures.

pub mod cache;
mod eigen;
mod ordering;
mod shell;
mod wks;

use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};
use crate::mesh::MassMatrix;

pub use eigen::{eigendecomposition, eigendecomposition_with, EigenOptions};
pub use ordering::reverse_cuthill_mckee;
pub use shell::{deformed_embedding, shell_embedding, smooth, ShellEmbedding};
pub use wks::{wks_descriptor, FeatureEmbedding, WksConfig};

/// Truncated eigenbasis `(Psi, Lambda)` together with the mass matrix it is
/// orthonormal against. `Psi^T M` serves as its pseudo-inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    eigenfunctions: DMatrix<f64>,
    mass: Arc<MassMatrix>,
}

impl SpectralBasis {
    pub(crate) fn from_parts(
        eigenvalues: Vec<f64>,
        eigenfunctions: DMatrix<f64>,
        mass: Arc<MassMatrix>,
    ) -> Self {
        debug_assert_eq!(eigenvalues.len(), eigenfunctions.ncols());
        debug_assert_eq!(mass.len(), eigenfunctions.nrows());
        SpectralBasis {
            eigenvalues,
            eigenfunctions,
            mass,
        }
    }

    /// Number of eigenpairs.
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of vertices.
    pub fn dim(&self) -> usize {
        self.eigenfunctions.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    /// First `k` eigenfunctions as an `m x k` view.
    pub fn truncated(&self, k: usize) -> Result<DMatrixView<'_, f64>> {
        self.check_level(k)?;
        Ok(self.eigenfunctions.columns(0, k))
    }

    pub(crate) fn check_level(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.k() {
            return Err(Error::OutOfRange {
                what: "spectral level",
                value: k,
                limit: self.k(),
            });
        }
        Ok(())
    }

    /// Spectral coefficients `Psi_k^T M signal` (`k x c`).
    pub fn project(&self, signal: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
        if signal.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "signal has {} rows, basis has {} vertices",
                signal.nrows(),
                self.dim()
            )));
        }
        let psi = self.truncated(k)?;
        Ok(psi.transpose() * self.mass.apply(signal))
    }

    /// Same basis restricted to its first `k` pairs.
    pub fn truncate(&self, k: usize) -> Result<SpectralBasis> {
        self.check_level(k)?;
        Ok(SpectralBasis {
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenfunctions: self.eigenfunctions.columns(0, k).into_owned(),
            mass: Arc::clone(&self.mass),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{mass_matrix, preprocess, stiffness_matrix};
    use crate::synthetic::icosphere;

    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut v: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn tetrahedron_full_spectrum_matches_dense_oracle() {
        use nalgebra::Point3;
        let mesh = crate::mesh::Mesh::new(
            "tet",
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.2, 0.9, 0.0),
                Point3::new(0.3, 0.3, 0.8),
            ],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap();
        let mass = mass_matrix(&mesh).unwrap();
        let stiff = stiffness_matrix(&mesh).unwrap();
        let basis = eigendecomposition(&mass, &stiff, 4).unwrap();
        // oracle: Jacobi rotations on M^-1/2 S M^-1/2
        let d = mass.diagonal();
        let s = stiff.to_dense();
        let a = DMatrix::from_fn(4, 4, |i, j| s[(i, j)] / (d[i] * d[j]).sqrt());
        let expected = jacobi_eigenvalues(a);
        for (got, want) in basis.eigenvalues().iter().zip(&expected) {
            assert!((got - want.max(0.0)).abs() < 1e-8, "{got} vs {want}");
        }
        // each returned pair satisfies S psi = lambda M psi
        for c in 0..4 {
            let psi = basis.eigenfunctions().column(c).into_owned();
            let lhs = &s * &psi;
            for r in 0..4 {
                assert!((lhs[r] - basis.eigenvalues()[c] * d[r] * psi[r]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn projection_round_trips_basis_columns() {
        let mesh = preprocess(&icosphere(2)).unwrap();
        let mass = mass_matrix(&mesh).unwrap();
        let stiff = stiffness_matrix(&mesh).unwrap();
        let basis = eigendecomposition(&mass, &stiff, 8).unwrap();
        let col = basis.eigenfunctions().columns(3, 1).into_owned();
        let coeffs = basis.project(&col, 8).unwrap();
        for i in 0..8 {
            let want = if i == 3 { 1.0 } else { 0.0 };
            assert!((coeffs[(i, 0)] - want).abs() < 1e-9);
        }
        assert!(basis.truncated(9).is_err());
    }
}
