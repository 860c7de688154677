use std::sync::Arc;

use nalgebra::DMatrix;

use super::SpectralBasis;
use crate::error::{Error, Result};
use crate::mesh::{vertex_normals_from_coords, Mesh};

/// Low-pass reconstruction `Psi_k Psi_k^T M signal`.
pub fn smooth(basis: &SpectralBasis, signal: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let coeffs = basis.project(signal, k)?;
    Ok(basis.truncated(k)? * coeffs)
}

/// Per-vertex features `(Psi_k, S_k(V), N_k)` at spectral level `k`.
///
/// The undeformed spectral block and smoothed coordinates are kept alongside
/// the current ones so that [`deformed_embedding`] always starts from the
/// same base, however many times it is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellEmbedding {
    level: usize,
    spectral_part: DMatrix<f64>,
    smoothed_coords: DMatrix<f64>,
    normals: DMatrix<f64>,
    base_spectral: DMatrix<f64>,
    base_coords: DMatrix<f64>,
    triangles: Arc<[[usize; 3]]>,
}

impl ShellEmbedding {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.spectral_part.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `m x k`
    pub fn spectral_part(&self) -> &DMatrix<f64> {
        &self.spectral_part
    }

    /// `m x 3`
    pub fn smoothed_coords(&self) -> &DMatrix<f64> {
        &self.smoothed_coords
    }

    /// `m x 3`, unit rows.
    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    /// Undeformed eigenfunctions `Psi_k`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.base_spectral
    }

    /// Undeformed smoothed coordinates `S_k(V)`.
    pub fn base_coords(&self) -> &DMatrix<f64> {
        &self.base_coords
    }

    pub fn width(&self) -> usize {
        self.level + 6
    }

    /// Row-wise concatenation into an `m x (k + 6)` matrix.
    pub fn concat(&self) -> DMatrix<f64> {
        let (m, k) = (self.len(), self.level);
        let mut out = DMatrix::zeros(m, k + 6);
        out.columns_mut(0, k).copy_from(&self.spectral_part);
        out.columns_mut(k, 3).copy_from(&self.smoothed_coords);
        out.columns_mut(k + 3, 3).copy_from(&self.normals);
        out
    }
}

pub fn shell_embedding(mesh: &Mesh, basis: &SpectralBasis, k: usize) -> Result<ShellEmbedding> {
    if basis.dim() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} vertices, mesh {} has {}",
            basis.dim(),
            mesh.id(),
            mesh.vertex_count()
        )));
    }
    let psi = basis.truncated(k)?.into_owned();
    let coords = smooth(basis, &mesh.coordinate_matrix(), k)?;
    let normals = vertex_normals_from_coords(&coords, mesh.triangles())?.to_matrix();
    Ok(ShellEmbedding {
        level: k,
        spectral_part: psi.clone(),
        smoothed_coords: coords.clone(),
        normals,
        base_spectral: psi,
        base_coords: coords,
        triangles: mesh.shared_triangles(),
    })
}

/// `(Psi C^T, S_k(V) + Psi tau, normals of the displaced coordinates)`,
/// always relative to the undeformed base of `embedding`.
pub fn deformed_embedding(
    embedding: &ShellEmbedding,
    c: &DMatrix<f64>,
    tau: &DMatrix<f64>,
) -> Result<ShellEmbedding> {
    let k = embedding.level;
    if c.shape() != (k, k) || tau.shape() != (k, 3) {
        return Err(Error::DimensionMismatch(format!(
            "level {k} needs C {k}x{k} and tau {k}x3, got {}x{} and {}x{}",
            c.nrows(),
            c.ncols(),
            tau.nrows(),
            tau.ncols()
        )));
    }
    let psi = &embedding.base_spectral;
    let coords = &embedding.base_coords + psi * tau;
    if coords.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMesh(
            "deformed coordinates are not finite".into(),
        ));
    }
    let normals = vertex_normals_from_coords(&coords, &embedding.triangles)?.to_matrix();
    Ok(ShellEmbedding {
        level: k,
        spectral_part: psi * c.transpose(),
        smoothed_coords: coords,
        normals,
        base_spectral: embedding.base_spectral.clone(),
        base_coords: embedding.base_coords.clone(),
        triangles: Arc::clone(&embedding.triangles),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{mass_matrix, preprocess, stiffness_matrix};
    use crate::spectral::eigendecomposition;
    use crate::synthetic::{grid_patch, icosphere};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis_of(mesh: &Mesh, k: usize) -> SpectralBasis {
        eigendecomposition(
            &mass_matrix(mesh).unwrap(),
            &stiffness_matrix(mesh).unwrap(),
            k,
        )
        .unwrap()
    }

    fn bumpy_grid() -> Mesh {
        grid_patch(6, 5, |x, y| 0.3 * (x * 0.9).sin() * (y * 0.7).cos())
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn constants_and_basis_columns_are_fixed() {
        let mesh = bumpy_grid();
        let basis = basis_of(&mesh, 10);
        let ones = DMatrix::from_element(mesh.vertex_count(), 1, 1.0);
        assert!(max_abs_diff(&smooth(&basis, &ones, 1).unwrap(), &ones) < 1e-6);
        let col = basis.eigenfunctions().columns(4, 1).into_owned();
        assert!(max_abs_diff(&smooth(&basis, &col, 5).unwrap(), &col) < 1e-6);
        assert!(smooth(&basis, &ones, 11).is_err());
    }

    #[test]
    fn smoothing_matches_dense_product() {
        let mesh = bumpy_grid();
        assert_eq!(mesh.vertex_count(), 30);
        let basis = basis_of(&mesh, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-1.0..1.0));
        let psi = basis.eigenfunctions().columns(0, 5).into_owned();
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            basis.mass().diagonal(),
        ));
        let oracle = &psi * psi.transpose() * m * &x;
        assert!(max_abs_diff(&smooth(&basis, &x, 5).unwrap(), &oracle) < 1e-9);
    }

    #[test]
    fn smoothing_is_a_nonexpansive_projection() {
        let mesh = bumpy_grid();
        let basis = basis_of(&mesh, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = basis.mass().diagonal().to_vec();
        let m_norm = |x: &DMatrix<f64>| {
            (0..x.nrows())
                .map(|i| d[i] * x[(i, 0)] * x[(i, 0)])
                .sum::<f64>()
                .sqrt()
        };
        for k in [1, 4, 9, 12] {
            let x = DMatrix::from_fn(30, 1, |_, _| rng.random_range(-1.0..1.0));
            let once = smooth(&basis, &x, k).unwrap();
            let twice = smooth(&basis, &once, k).unwrap();
            assert!(max_abs_diff(&once, &twice) < 1e-9);
            assert!(m_norm(&once) <= m_norm(&x) + 1e-9);
        }
    }

    #[test]
    fn full_basis_reconstructs_vertices() {
        let mesh = grid_patch(3, 3, |x, y| 0.2 * x * y);
        let basis = basis_of(&mesh, 9);
        let emb = shell_embedding(&mesh, &basis, 9).unwrap();
        assert!(max_abs_diff(emb.smoothed_coords(), &mesh.coordinate_matrix()) < 1e-6);
    }

    #[test]
    fn planar_normals_survive_smoothing() {
        let mesh = grid_patch(5, 5, |_, _| 0.0);
        let basis = basis_of(&mesh, 10);
        for k in [3, 6, 10] {
            let emb = shell_embedding(&mesh, &basis, k).unwrap();
            for r in 0..emb.len() {
                assert!(emb.normals()[(r, 0)].abs() < 1e-9);
                assert!(emb.normals()[(r, 1)].abs() < 1e-9);
                assert!((emb.normals()[(r, 2)].abs() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn width_is_level_plus_six() {
        let mesh = grid_patch(10, 10, |x, y| 0.1 * (x + y).sin());
        let basis = basis_of(&mesh, 8);
        let emb = shell_embedding(&mesh, &basis, 6).unwrap();
        assert_eq!(emb.concat().ncols(), 12);
        assert_eq!(emb.concat().nrows(), 100);
    }

    #[test]
    fn identity_parameters_leave_embedding_unchanged() {
        let mesh = preprocess(&icosphere(1)).unwrap();
        let basis = basis_of(&mesh, 9);
        let emb = shell_embedding(&mesh, &basis, 9).unwrap();
        let out =
            deformed_embedding(&emb, &DMatrix::identity(9, 9), &DMatrix::zeros(9, 3)).unwrap();
        assert_eq!(out.spectral_part(), emb.spectral_part());
        assert_eq!(out.smoothed_coords(), emb.smoothed_coords());
        assert!(max_abs_diff(out.normals(), emb.normals()) < 1e-12);
        let zero = deformed_embedding(&emb, &DMatrix::zeros(9, 9), &DMatrix::zeros(9, 3)).unwrap();
        assert!(zero.spectral_part().iter().all(|&x| x == 0.0));
        assert!(deformed_embedding(&emb, &DMatrix::zeros(8, 8), &DMatrix::zeros(9, 3)).is_err());
    }

    #[test]
    fn displacement_moves_toward_projected_target() {
        let mesh = preprocess(&icosphere(1)).unwrap();
        let target = mesh
            .with_vertices(
                mesh.vertices()
                    .iter()
                    .map(|p| nalgebra::Point3::new(p.x * 1.2, p.y, p.z + 0.1))
                    .collect(),
            )
            .unwrap();
        let basis = basis_of(&mesh, 12);
        let emb = shell_embedding(&mesh, &basis, 12).unwrap();
        let disp = target.coordinate_matrix() - mesh.coordinate_matrix();
        let tau = basis.project(&disp, 12).unwrap();
        let out = deformed_embedding(&emb, &DMatrix::identity(12, 12), &tau).unwrap();
        // dense oracle: S(V) + Psi Psi^T M (V_target - V)
        let psi = basis.eigenfunctions();
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            basis.mass().diagonal(),
        ));
        let oracle = emb.smoothed_coords() + psi * psi.transpose() * m * &disp;
        assert!(max_abs_diff(out.smoothed_coords(), &oracle) < 1e-9);
        let before = (emb.smoothed_coords()
            - smooth(&basis, &target.coordinate_matrix(), 12).unwrap())
        .norm();
        let after = (out.smoothed_coords()
            - smooth(&basis, &target.coordinate_matrix(), 12).unwrap())
        .norm();
        assert!(after < 1e-9 && before > 1e-3);
    }
}
