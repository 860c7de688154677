use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Mesh;
use crate::error::{Error, Result};

/// Edge-graph distances from a source set. Unreachable vertices hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    pub distances: Vec<f64>,
    pub unreachable: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    vertex: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra over the mesh edge graph with Euclidean edge lengths.
///
/// This overestimates true surface geodesics (paths are restricted to edges);
/// the bias shrinks with mesh resolution.
pub fn geodesic_distances(mesh: &Mesh, sources: &[usize]) -> Result<GeodesicField> {
    let adjacency = mesh.adjacency();
    geodesic_on_adjacency(mesh, &adjacency, sources)
}

pub(crate) fn geodesic_on_adjacency(
    mesh: &Mesh,
    adjacency: &[Vec<usize>],
    sources: &[usize],
) -> Result<GeodesicField> {
    let m = mesh.vertex_count();
    if sources.is_empty() {
        return Err(Error::Precondition("geodesic source set is empty".into()));
    }
    let verts = mesh.vertices();
    let mut dist = vec![f64::INFINITY; m];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if s >= m {
            return Err(Error::OutOfRange {
                what: "source vertex",
                value: s,
                limit: m,
            });
        }
        dist[s] = 0.0;
        heap.push(Candidate {
            dist: 0.0,
            vertex: s,
        });
    }
    while let Some(Candidate { dist: d, vertex: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &v in &adjacency[u] {
            let nd = d + (verts[u] - verts[v]).norm();
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Candidate {
                    dist: nd,
                    vertex: v,
                });
            }
        }
    }
    let unreachable = dist.iter().filter(|d| d.is_infinite()).count();
    if unreachable > 0 {
        log::warn!(
            "mesh {}: {unreachable} vertices unreachable from the geodesic sources",
            mesh.id()
        );
    }
    Ok(GeodesicField {
        distances: dist,
        unreachable,
    })
}
