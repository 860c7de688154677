use nalgebra::{DMatrix, DVector, Vector3};
use nalgebra_sparse::{CooMatrix, CscMatrix};

use super::Mesh;
use crate::error::{Error, Result};

/// Lumped (barycentric) vertex areas.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    diagonal: Vec<f64>,
}

impl MassMatrix {
    pub fn from_diagonal(diagonal: Vec<f64>) -> Result<Self> {
        if let Some(i) = diagonal.iter().position(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidMesh(format!(
                "mass entry {i} is not positive ({})",
                diagonal[i]
            )));
        }
        Ok(MassMatrix { diagonal })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.diagonal.iter().sum()
    }

    /// `M * x`, row-scaling a dense matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= self.diagonal[i];
        }
        out
    }
}

/// Symmetric cotangent matrix. Off-diagonals are `-1/2 * sum(cot)` over the
/// angles opposite each edge, the diagonal makes every row sum vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    matrix: CscMatrix<f64>,
}

impl StiffnessMatrix {
    pub fn matrix(&self) -> &CscMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Entry `(i, j)`, zero outside the sparsity pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix
            .get_entry(i, j)
            .map(|e| e.into_value())
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from(&self.matrix)
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * x
    }

    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let out = &self.matrix * x;
        out.column(0).into_owned()
    }
}

/// Unit vertex normals.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    normals: Vec<Vector3<f64>>,
}

impl NormalField {
    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.normals.len(), 3, |i, c| self.normals[i][c])
    }
}

pub fn mass_matrix(mesh: &Mesh) -> Result<MassMatrix> {
    let mut diag = vec![0.0; mesh.vertex_count()];
    for (t, &[a, b, c]) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        if !(area > 0.0) {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
        let third = area / 3.0;
        diag[a] += third;
        diag[b] += third;
        diag[c] += third;
    }
    MassMatrix::from_diagonal(diag)
}

fn cot(u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    u.dot(v) / u.cross(v).norm()
}

pub fn stiffness_matrix(mesh: &Mesh) -> Result<StiffnessMatrix> {
    let m = mesh.vertex_count();
    let verts = mesh.vertices();
    let mut coo = CooMatrix::new(m, m);
    let mut diag = vec![0.0; m];
    for (t, &tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        if !(area > 0.0) {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
        for corner in 0..3 {
            let o = tri[corner];
            let i = tri[(corner + 1) % 3];
            let j = tri[(corner + 2) % 3];
            let w = 0.5 * cot(&(verts[i] - verts[o]), &(verts[j] - verts[o]));
            if !w.is_finite() {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
            coo.push(i, j, -w);
            coo.push(j, i, -w);
            diag[i] += w;
            diag[j] += w;
        }
    }
    for (i, d) in diag.into_iter().enumerate() {
        coo.push(i, i, d);
    }
    Ok(StiffnessMatrix {
        matrix: CscMatrix::from(&coo),
    })
}

/// Area-weighted vertex normals for arbitrary coordinates (`m x 3`) on the
/// given connectivity.
pub fn vertex_normals_from_coords(
    coords: &DMatrix<f64>,
    triangles: &[[usize; 3]],
) -> Result<NormalField> {
    let m = coords.nrows();
    let point = |i: usize| Vector3::new(coords[(i, 0)], coords[(i, 1)], coords[(i, 2)]);
    let mut acc = vec![Vector3::zeros(); m];
    let mut scale = vec![0.0f64; m];
    for &[a, b, c] in triangles {
        let pa = point(a);
        // |cross| is twice the area, so this is an area-weighted unit normal
        let n = (point(b) - pa).cross(&(point(c) - pa));
        let len = n.norm();
        for v in [a, b, c] {
            acc[v] += n;
            scale[v] += len;
        }
    }
    let normals = acc
        .into_iter()
        .zip(scale)
        .enumerate()
        .map(|(v, (n, s))| {
            let len = n.norm();
            if !(len > 1e-12 * s) || !len.is_finite() {
                Err(Error::ZeroNormal(v))
            } else {
                Ok(n / len)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalField { normals })
}

pub fn vertex_normals(mesh: &Mesh) -> Result<NormalField> {
    vertex_normals_from_coords(&mesh.coordinate_matrix(), mesh.triangles())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{grid_patch, icosphere};
    use nalgebra::Point3;

    fn mesh(v: &[[f64; 3]], t: Vec<[usize; 3]>) -> Mesh {
        Mesh::new(
            "m",
            v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
            t,
        )
        .unwrap()
    }

    fn equilateral() -> Mesh {
        mesh(
            &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.5, 3f64.sqrt() / 2.0, 0.0],
            ],
            vec![[0, 1, 2]],
        )
    }

    #[test]
    fn mass_of_right_triangle() {
        let m = mesh(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        );
        let mass = mass_matrix(&m).unwrap();
        for &a in mass.diagonal() {
            assert!((a - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_of_equilateral_triangle() {
        // Heron: s = 3/2, area = sqrt(s (s-1)^3) = sqrt(3)/4
        let s: f64 = 1.5;
        let heron = (s * (s - 1.0).powi(3)).sqrt();
        let mass = mass_matrix(&equilateral()).unwrap();
        for &a in mass.diagonal() {
            assert!((a - heron / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_of_two_triangles_sharing_an_edge() {
        // areas 1/2 (legs 1,1) and 1 (legs 1,2), shared edge (0,1)
        let m = mesh(
            &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [1.0, -2.0, 0.0],
            ],
            vec![[0, 1, 2], [0, 3, 1]],
        );
        let mass = mass_matrix(&m).unwrap();
        let shared = (0.5 + 1.0) / 3.0;
        assert!((mass.diagonal()[0] - shared).abs() < 1e-15);
        assert!((mass.diagonal()[1] - shared).abs() < 1e-15);
        assert!((mass.diagonal()[2] - 0.5 / 3.0).abs() < 1e-15);
        assert!((mass.diagonal()[3] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stiffness_of_equilateral_triangle() {
        let s = stiffness_matrix(&equilateral()).unwrap();
        let off = -1.0 / (2.0 * 3f64.sqrt());
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 / 3f64.sqrt() } else { off };
                assert!((s.get(i, j) - expected).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn stiffness_square_diagonal_weight() {
        let m = mesh(
            &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        );
        let s = stiffness_matrix(&m).unwrap();
        // both angles opposite the diagonal are right angles
        assert!(s.get(0, 2).abs() < 1e-12);
        assert!(s.get(2, 0).abs() < 1e-12);
        // boundary edges see a single 45 degree angle
        assert!((s.get(0, 1) + 0.5).abs() < 1e-12);
        assert!((s.get(0, 3) + 0.5).abs() < 1e-12);
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(s.get(1, 3), 0.0);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let m = icosphere(2);
        let s = stiffness_matrix(&m).unwrap();
        let ones = DVector::from_element(m.vertex_count(), 1.0);
        assert!(s.apply_vec(&ones).amax() < 1e-9);
    }

    #[test]
    fn flat_normals_point_up() {
        let g = grid_patch(4, 3, |_, _| 0.0);
        let n = vertex_normals(&g).unwrap();
        for v in n.normals() {
            assert!((v - Vector3::z()).norm() < 1e-12);
        }
        let flipped = vertex_normals(&g.flipped()).unwrap();
        for (a, b) in n.normals().iter().zip(flipped.normals()) {
            assert!((a + b).norm() < 1e-12);
        }
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = icosphere(3);
        let n = vertex_normals(&m).unwrap();
        let limit = 5f64.to_radians().cos();
        for (p, v) in m.vertices().iter().zip(n.normals()) {
            assert!((v.norm() - 1.0).abs() < 1e-9);
            assert!(v.dot(&p.coords.normalize()) > limit);
        }
    }

    #[test]
    fn zero_normal_is_reported() {
        // two coincident triangles with opposite winding cancel at every vertex
        let coords = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let err = vertex_normals_from_coords(&coords, &[[0, 1, 2], [0, 2, 1]]).unwrap_err();
        assert!(matches!(err, Error::ZeroNormal(0)));
    }
}
