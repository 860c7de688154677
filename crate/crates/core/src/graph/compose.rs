use nalgebra::DMatrix;

use super::{shortest_path, PairStore, ShapeGraph};
use crate::error::{Error, Result};
use crate::matching::{match_energy_hard, Correspondence};
use crate::mesh::Mesh;

/// A map propagated along a shortest path of the shape graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiMatch {
    pub path: Vec<usize>,
    pub pi: Correspondence,
    pub cycle_score: f64,
}

/// Chains the stored maps along `path` (node indices into `ids`); the first
/// hop is applied first.
pub fn compose_maps(path: &[usize], ids: &[String], store: &PairStore) -> Result<Correspondence> {
    if path.len() < 2 {
        return Err(Error::Precondition(format!(
            "path needs at least two nodes, got {}",
            path.len()
        )));
    }
    let id = |v: usize| {
        ids.get(v).ok_or(Error::OutOfRange {
            what: "node",
            value: v,
            limit: ids.len(),
        })
    };
    let mut pi = store.get(id(path[0])?, id(path[1])?)?.pi.clone();
    for hop in path[1..].windows(2) {
        pi = pi.then(&store.get(id(hop[0])?, id(hop[1])?)?.pi)?;
    }
    Ok(pi)
}

/// `E(V_reg, V_target; pi)`: how far the registered source lands from the
/// target vertices `pi` picks.
pub fn cycle_consistency_score(
    registration: &DMatrix<f64>,
    target: &Mesh,
    pi: &Correspondence,
) -> Result<f64> {
    match_energy_hard(registration, &target.coordinate_matrix(), pi)
}

/// Shortest path, composed map and its score against the direct pair's
/// registration. `meshes` is indexed like the graph nodes.
pub fn multi_match(
    graph: &ShapeGraph,
    store: &PairStore,
    meshes: &[Mesh],
    i: usize,
    j: usize,
) -> Result<MultiMatch> {
    let path = shortest_path(graph, i, j)?;
    let pi = compose_maps(&path, graph.nodes(), store)?;
    let direct = store.get(&graph.nodes()[i], &graph.nodes()[j])?;
    let target = meshes.get(j).ok_or(Error::OutOfRange {
        what: "mesh",
        value: j,
        limit: meshes.len(),
    })?;
    let cycle_score = cycle_consistency_score(&direct.registration, target, &pi)?;
    Ok(MultiMatch {
        path,
        pi,
        cycle_score,
    })
}
