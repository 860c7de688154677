//! Triangle meshes, normalization and discrete differential operators.

mod geodesic;
pub mod io;
mod operators;

use std::sync::Arc;

use nalgebra::{DMatrix, Point3, Vector3};

use crate::error::{Error, Result};

pub use geodesic::{geodesic_distances, GeodesicField};
pub use io::{load_mesh, ply_document, ply_string, write_ply, Rgb};
pub use operators::{
    mass_matrix, stiffness_matrix, vertex_normals, vertex_normals_from_coords, MassMatrix,
    NormalField, StiffnessMatrix,
};

/// Triangles whose area falls below this fraction of the total are rejected.
pub const DEGENERATE_AREA_FRACTION: f64 = 1e-12;

/// Target value of `sqrt(total area)` after [`preprocess`].
pub const NORMALIZED_SQRT_AREA: f64 = 2.0 / 3.0;

/// A validated triangle mesh.
///
/// Invariants enforced by [`Mesh::new`]: at least one triangle, every index
/// in range, no repeated index inside a triangle, no isolated vertex, finite
/// coordinates and no triangle with (relatively) vanishing area.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    id: String,
    vertices: Vec<Point3<f64>>,
    triangles: Arc<[[usize; 3]]>,
}

impl Mesh {
    pub fn new(
        id: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        triangles: impl Into<Arc<[[usize; 3]]>>,
    ) -> Result<Self> {
        let triangles = triangles.into();
        validate_topology(vertices.len(), &triangles)?;
        if let Some(v) = vertices
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!(
                "vertex {v} has a non-finite coordinate"
            )));
        }
        let mesh = Mesh {
            id: id.into(),
            vertices,
            triangles,
        };
        let total = mesh.total_area();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::ZeroArea);
        }
        for (t, _) in mesh.triangles.iter().enumerate() {
            let area = mesh.triangle_area(t);
            if area < DEGENERATE_AREA_FRACTION * total {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
        }
        Ok(mesh)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub(crate) fn shared_triangles(&self) -> Arc<[[usize; 3]]> {
        Arc::clone(&self.triangles)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Same connectivity, new vertex positions. Revalidates geometry.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Mesh::new(self.id.clone(), vertices, Arc::clone(&self.triangles))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum: Vector3<f64> = self.vertices.iter().map(|p| p.coords).sum();
        Point3::from(sum / self.vertices.len() as f64)
    }

    /// Vertex coordinates as an `m x 3` matrix.
    pub fn coordinate_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.vertices.len(), 3, |i, c| self.vertices[i][c])
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Vertex adjacency lists, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Copy with every triangle's winding reversed.
    pub fn flipped(&self) -> Mesh {
        let triangles: Vec<[usize; 3]> =
            self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Mesh {
            id: self.id.clone(),
            vertices: self.vertices.clone(),
            triangles: triangles.into(),
        }
    }
}

pub(crate) fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn validate_topology(vertex_count: usize, triangles: &[[usize; 3]]) -> Result<()> {
    if triangles.is_empty() {
        return Err(Error::InvalidMesh("mesh has no triangles".into()));
    }
    let mut referenced = vec![false; vertex_count];
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            if v >= vertex_count {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex {v}, index out of range (vertex count {vertex_count})"
                )));
            }
            referenced[v] = true;
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(Error::InvalidMesh(format!(
                "triangle {t} repeats a vertex index {tri:?}"
            )));
        }
    }
    if let Some(v) = referenced.iter().position(|r| !r) {
        return Err(Error::InvalidMesh(format!("vertex {v} is isolated")));
    }
    Ok(())
}

/// Center the mean vertex at the origin and scale so that
/// `sqrt(total area) == 2/3`. Triangles are untouched.
pub fn preprocess(mesh: &Mesh) -> Result<Mesh> {
    let area = mesh.total_area();
    if !(area > 0.0) {
        return Err(Error::ZeroArea);
    }
    let scale = NORMALIZED_SQRT_AREA / area.sqrt();
    let center = mesh.centroid().coords;
    let vertices = mesh
        .vertices
        .iter()
        .map(|p| Point3::from((p.coords - center) * scale))
        .collect();
    mesh.with_vertices(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(vertices: &[[f64; 3]]) -> Mesh {
        Mesh::new(
            "t",
            vertices
                .iter()
                .map(|v| Point3::new(v[0], v[1], v[2]))
                .collect(),
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_topology() {
        let v = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        assert!(matches!(
            Mesh::new("a", v.clone(), vec![[0, 1, 3]]),
            Err(Error::InvalidMesh(m)) if m.contains("triangle 0")
        ));
        assert!(Mesh::new("a", v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(Mesh::new("a", v.clone(), Vec::<[usize; 3]>::new()).is_err());
        let mut v4 = v.clone();
        v4.push(Point3::new(5.0, 5.0, 5.0));
        assert!(
            matches!(Mesh::new("a", v4, vec![[0, 1, 2]]), Err(Error::InvalidMesh(m)) if m.contains("isolated"))
        );
    }

    #[test]
    fn rejects_degenerate_triangle() {
        let v = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        let err = Mesh::new("a", v, vec![[0, 1, 2], [0, 1, 3]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateTriangle { index: 1, .. }));
    }

    #[test]
    fn preprocess_unit_area_centered() {
        // right isosceles triangle with legs sqrt(2): area 1, then centered
        let s = 2f64.sqrt();
        let m = tri(&[[0.0, 0.0, 0.0], [s, 0.0, 0.0], [0.0, s, 0.0]]);
        let c = m.centroid().coords;
        let centered = m
            .with_vertices(
                m.vertices()
                    .iter()
                    .map(|p| Point3::from(p.coords - c))
                    .collect(),
            )
            .unwrap();
        let out = preprocess(&centered).unwrap();
        for (a, b) in centered.vertices().iter().zip(out.vertices()) {
            assert!((a.coords * (2.0 / 3.0) - b.coords).norm() < 1e-12);
        }
    }

    #[test]
    fn preprocess_single_triangle_area_nine() {
        // legs 3 and 6: area 9; centroid (1,1,1) after shifting
        let raw = [[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 6.0, 0.0]];
        let shift = [0.0, -1.0, 1.0];
        let m = tri(&raw.map(|v| [v[0] + shift[0], v[1] + shift[1], v[2] + shift[2]]));
        assert!((m.total_area() - 9.0).abs() < 1e-12);
        assert!((m.centroid() - Point3::new(1.0, 1.0, 1.0)).norm() < 1e-12);
        let out = preprocess(&m).unwrap();
        assert!((out.total_area() - 4.0 / 9.0).abs() < 1e-12);
        assert!(out.centroid().coords.norm() < 1e-12);
        assert_eq!(out.triangles(), m.triangles());
    }

    #[test]
    fn preprocess_fixed_point_and_idempotent() {
        let m = tri(&[[0.0, 0.0, 0.0], [2.0, 0.1, 0.0], [0.3, 1.7, 0.5]]);
        let once = preprocess(&m).unwrap();
        let twice = preprocess(&once).unwrap();
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!((once.total_area().sqrt() - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn flipped_reverses_winding() {
        let m = tri(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(m.flipped().triangles(), &[[0, 2, 1]]);
    }
}
