//! Procedural test geometry: icospheres, height-field patches and a family
//! of progressively bent cylinders sharing one connectivity.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::Mesh;

/// Unit icosphere after `subdivisions` rounds of 4-to-1 splitting
/// (`10 * 4^s + 2` vertices, 2562 at `s = 4`).
pub fn icosphere(subdivisions: u32) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::new(v[0], v[1], v[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(
        format!("icosphere{subdivisions}"),
        verts.into_iter().map(Point3::from).collect(),
        faces,
    )
    .expect("icosphere is a valid mesh")
}

/// `nx x ny` grid on integer coordinates with `z = height(x, y)`, wound
/// counter-clockwise when seen from `+z`.
pub fn grid_patch(nx: usize, ny: usize, height: impl Fn(f64, f64) -> f64) -> Mesh {
    assert!(nx >= 2 && ny >= 2, "grid needs at least 2x2 vertices");
    let mut verts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i as f64, j as f64);
            verts.push(Point3::new(x, y, height(x, y)));
        }
    }
    let idx = |i: usize, j: usize| j * nx + i;
    let mut tris = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Mesh::new(format!("grid{nx}x{ny}"), verts, tris).expect("grid is a valid mesh")
}

/// Open tube along the x axis.
///
/// `taper` grows the radius linearly from one end to the other and `lobe`
/// distorts the cross-section with `cos(theta) + sin(2 theta)`, so the tube
/// has no rotational, reflective or end-to-end symmetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderSpec {
    pub rings: usize,
    pub segments: usize,
    pub length: f64,
    pub radius: f64,
    pub taper: f64,
    pub lobe: f64,
}

impl Default for CylinderSpec {
    fn default() -> Self {
        CylinderSpec {
            rings: 33,
            segments: 16,
            length: 4.0,
            radius: 0.35,
            taper: 0.4,
            lobe: 0.15,
        }
    }
}

/// Straight tube with outward-facing winding. Vertex `r * segments + s`
/// sits on ring `r` at angle `2 pi s / segments`.
pub fn cylinder(spec: &CylinderSpec) -> Mesh {
    let CylinderSpec {
        rings,
        segments,
        length,
        radius,
        taper,
        lobe,
    } = *spec;
    assert!(rings >= 2 && segments >= 3);
    let mut verts = Vec::with_capacity(rings * segments);
    for r in 0..rings {
        let t = r as f64 / (rings - 1) as f64;
        let x = -length / 2.0 + length * t;
        for s in 0..segments {
            let theta = 2.0 * PI * s as f64 / segments as f64;
            let rho = radius
                * (1.0 + taper * (t - 0.5))
                * (1.0 + lobe * (theta.cos() + (2.0 * theta).sin()));
            verts.push(Point3::new(x, rho * theta.cos(), rho * theta.sin()));
        }
    }
    let idx = |r: usize, s: usize| r * segments + s % segments;
    let mut tris = Vec::with_capacity(2 * (rings - 1) * segments);
    for r in 0..rings - 1 {
        for s in 0..segments {
            tris.push([idx(r, s), idx(r, s + 1), idx(r + 1, s + 1)]);
            tris.push([idx(r, s), idx(r + 1, s + 1), idx(r + 1, s)]);
        }
    }
    Mesh::new("cylinder", verts, tris).expect("cylinder is a valid mesh")
}

/// Bend a mesh laid out along the x axis into a circular arc of total angle
/// `angle` in the xy plane. The x extent is preserved along the centerline.
pub fn bend(mesh: &Mesh, length: f64, angle: f64) -> Mesh {
    if angle.abs() < 1e-12 {
        return mesh.clone();
    }
    let rho = length / angle;
    let verts = mesh
        .vertices()
        .iter()
        .map(|p| {
            let phi = p.x / rho;
            let (s, c) = phi.sin_cos();
            // centerline point plus the cross-section offset along the
            // in-plane normal (pointing toward the center of curvature)
            let center = Vector3::new(rho * s, rho * (1.0 - c), 0.0);
            let normal = Vector3::new(-s, c, 0.0);
            Point3::from(center + normal * p.y + Vector3::z() * p.z)
        })
        .collect();
    mesh.with_vertices(verts)
        .expect("bending keeps the mesh valid")
}

/// `poses` bent copies of one tube, from straight to `max_angle`, with the
/// identity as ground-truth correspondence between any two members.
///
/// The seed jitters the intermediate bend angles and adds small vertex noise.
pub fn bent_cylinder_family(
    spec: &CylinderSpec,
    poses: usize,
    max_angle: f64,
    seed: u64,
) -> Vec<Mesh> {
    assert!(poses >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = cylinder(spec);
    let step = max_angle / (poses - 1) as f64;
    let noise = 0.01 * spec.radius;
    (0..poses)
        .map(|p| {
            let mut angle = step * p as f64;
            if p > 0 && p + 1 < poses {
                angle += rng.random_range(-0.2..0.2) * step;
            }
            let bent = bend(&base, spec.length, angle);
            let verts = bent
                .vertices()
                .iter()
                .map(|v| {
                    let d = Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    v + d * noise
                })
                .collect();
            bent.with_vertices(verts)
                .expect("noisy pose is valid")
                .with_id(format!("pose{p}"))
        })
        .collect()
}
