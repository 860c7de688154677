//! Affinity graph over a shape collection.
//!
//! Edge weights come from how well each pair registers in both directions.
//! Sparse topologies keep `N - 1` of those edges and treat the rest as
//! infinitely expensive; maps between any two shapes are then chained along
//! shortest paths.

mod compose;
mod mds;
mod paths;
mod topology;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use compose::{compose_maps, cycle_consistency_score, multi_match, MultiMatch};
pub use mds::mds_embedding;
pub use paths::{all_pairs_distances, shortest_path};
pub use topology::{
    hamiltonian_path, minimum_spanning_tree, path_weight, star_center, Edge, TspSolver,
    TSP_EXACT_LIMIT,
};

use crate::error::{Error, Result};
use crate::matching::{match_energy_hard, MatchResult};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Full,
    Mst,
    Tsp,
    Star,
}

impl Topology {
    pub const ALL: [Topology; 4] = [Topology::Full, Topology::Mst, Topology::Tsp, Topology::Star];

    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Full => "full",
            Topology::Mst => "mst",
            Topology::Tsp => "tsp",
            Topology::Star => "star",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topology::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "unknown topology {s:?} (expected full, mst, tsp or star)"
                ))
            })
    }
}

/// Directed pairwise results keyed by `(source id, target id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairStore {
    results: BTreeMap<(String, String), MatchResult>,
}

impl PairStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        source: impl Into<String>,
        target: impl Into<String>,
        result: MatchResult,
    ) {
        self.results.insert((source.into(), target.into()), result);
    }

    pub fn get(&self, source: &str, target: &str) -> Result<&MatchResult> {
        self.results
            .get(&(source.to_owned(), target.to_owned()))
            .ok_or_else(|| Error::MissingPair(source.to_owned(), target.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }
}

/// `min(E(V_ij, V_j; pi_ij), E(V_ji, V_i; pi_ji))`, comparing each
/// registration with the raw vertices of its target.
pub fn affinity_weight(
    ij: &MatchResult,
    ji: &MatchResult,
    mesh_i: &Mesh,
    mesh_j: &Mesh,
) -> Result<f64> {
    let forward = match_energy_hard(&ij.registration, &mesh_j.coordinate_matrix(), &ij.pi)?;
    let backward = match_energy_hard(&ji.registration, &mesh_i.coordinate_matrix(), &ji.pi)?;
    Ok(forward.min(backward))
}

/// Symmetric weight matrix over `meshes` (in node order) from both
/// orientations of every pair.
pub fn affinity_matrix(store: &PairStore, meshes: &[Mesh]) -> Result<DMatrix<f64>> {
    let n = meshes.len();
    let mut w = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            let (ma, mb) = (&meshes[a], &meshes[b]);
            let x = affinity_weight(
                store.get(ma.id(), mb.id())?,
                store.get(mb.id(), ma.id())?,
                ma,
                mb,
            )?;
            w[(a, b)] = x;
            w[(b, a)] = x;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeGraph {
    nodes: Vec<String>,
    weights: DMatrix<f64>,
    topology: Topology,
    retained: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    tsp_solver: Option<TspSolver>,
}

impl ShapeGraph {
    /// Selects the retained edges for `topology` from a symmetric,
    /// nonnegative weight matrix with zero diagonal.
    pub fn from_weights(
        nodes: Vec<String>,
        weights: DMatrix<f64>,
        topology: Topology,
    ) -> Result<Self> {
        let n = nodes.len();
        if weights.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "{n} nodes but a {}x{} weight matrix",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::Precondition(format!(
                "a shape graph needs at least two nodes, got {n}"
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Precondition(format!(
                    "weight diagonal at node {i} is not zero"
                )));
            }
            for j in 0..i {
                let w = weights[(i, j)];
                if w != weights[(j, i)] || !(w >= 0.0) {
                    return Err(Error::Precondition(format!(
                        "weights must be symmetric and nonnegative; bad entry ({i}, {j})"
                    )));
                }
            }
        }
        let mut tsp_solver = None;
        let retained = match topology {
            Topology::Full => (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .collect(),
            Topology::Mst => minimum_spanning_tree(&weights),
            Topology::Star => topology::star_edges(&weights),
            Topology::Tsp => {
                let (path, solver) = hamiltonian_path(&weights);
                tsp_solver = Some(solver);
                topology::path_edges(&path)
            }
        };
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &retained {
            if weights[(a, b)].is_finite() {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(ShapeGraph {
            nodes,
            weights,
            topology,
            retained,
            adjacency,
            tsp_solver,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n == id)
            .ok_or_else(|| Error::Precondition(format!("shape {id:?} is not a graph node")))
    }

    /// The full affinity matrix, including edges the topology drops.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weight of a retained edge; `+inf` for any other pair.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        if a == b {
            0.0
        } else if self.adjacency[a].binary_search(&b).is_ok() {
            self.weights[(a, b)]
        } else {
            f64::INFINITY
        }
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn retained_edges(&self) -> &[Edge] {
        &self.retained
    }

    pub fn tsp_solver(&self) -> Option<TspSolver> {
        self.tsp_solver
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().copied()
    }

    pub fn to_document(&self) -> Result<GraphDocument> {
        let mds = mds_embedding(self)?;
        Ok(GraphDocument {
            nodes: self.nodes.clone(),
            topology: self.topology,
            tsp_solver: self.tsp_solver,
            weights: self
                .weights
                .row_iter()
                .map(|r| r.iter().map(|&w| w.is_finite().then_some(w)).collect())
                .collect(),
            retained_edges: self.retained.iter().map(|&(a, b)| [a, b]).collect(),
            mds_coordinates: mds.row_iter().map(|r| [r[0], r[1]]).collect(),
        })
    }

    /// Rebuilds the graph from a document; edges are re-derived from the
    /// weights and must agree with the stored list.
    pub fn from_document(doc: &GraphDocument) -> Result<Self> {
        let n = doc.nodes.len();
        if doc.weights.len() != n || doc.weights.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "graph document weights are not {n}x{n}"
            )));
        }
        let w = DMatrix::from_fn(n, n, |i, j| doc.weights[i][j].unwrap_or(f64::INFINITY));
        let graph = ShapeGraph::from_weights(doc.nodes.clone(), w, doc.topology)?;
        let stored: Vec<Edge> = doc
            .retained_edges
            .iter()
            .map(|&[a, b]| (a.min(b), a.max(b)))
            .collect();
        let mut sorted = stored.clone();
        sorted.sort_unstable();
        if sorted != graph.retained {
            return Err(Error::Precondition(
                "graph document edges do not match its weights".into(),
            ));
        }
        Ok(graph)
    }
}

/// JSON form of a [`ShapeGraph`]; non-finite weights are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GraphDocument {
    pub nodes: Vec<String>,
    pub topology: Topology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsp_solver: Option<TspSolver>,
    pub weights: Vec<Vec<Option<f64>>>,
    pub retained_edges: Vec<[usize; 2]>,
    pub mds_coordinates: Vec<[f64; 2]>,
}

/// Graph over `meshes` (node order = slice order) from a complete store.
pub fn build_graph(store: &PairStore, meshes: &[Mesh], topology: Topology) -> Result<ShapeGraph> {
    let w = affinity_matrix(store, meshes)?;
    ShapeGraph::from_weights(
        meshes.iter().map(|m| m.id().to_owned()).collect(),
        w,
        topology,
    )
}
