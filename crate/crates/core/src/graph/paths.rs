use nalgebra::DMatrix;

use super::ShapeGraph;
use crate::error::{Error, Result};

/// Dijkstra over the retained edges with `(distance, node sequence)` labels,
/// so equal-weight paths resolve to the lexicographically smallest sequence.
/// Distances are summed left to right along the path.
pub fn shortest_path(graph: &ShapeGraph, from: usize, to: usize) -> Result<Vec<usize>> {
    let n = graph.len();
    for v in [from, to] {
        if v >= n {
            return Err(Error::OutOfRange {
                what: "node",
                value: v,
                limit: n,
            });
        }
    }
    if from == to {
        return Err(Error::Precondition(format!(
            "shortest path query from node {from} to itself"
        )));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut label: Vec<Option<Vec<usize>>> = vec![None; n];
    let mut settled = vec![false; n];
    dist[from] = 0.0;
    label[from] = Some(vec![from]);
    loop {
        let mut pick: Option<usize> = None;
        for v in (0..n).filter(|&v| !settled[v] && label[v].is_some()) {
            pick = match pick {
                Some(p) if (dist[p], &label[p]) <= (dist[v], &label[v]) => Some(p),
                _ => Some(v),
            };
        }
        let Some(u) = pick else {
            return Err(Error::Unreachable { from, to });
        };
        if u == to {
            return Ok(label[u].take().expect("settled nodes are labelled"));
        }
        settled[u] = true;
        let base = label[u].clone().expect("picked nodes are labelled");
        for v in graph.neighbors(u) {
            if settled[v] {
                continue;
            }
            let d = dist[u] + graph.weight(u, v);
            let better = match &label[v] {
                None => true,
                Some(old) => {
                    d < dist[v] || (d == dist[v] && base.iter().chain([&v]).lt(old.iter()))
                }
            };
            if better {
                let mut p = base.clone();
                p.push(v);
                dist[v] = d;
                label[v] = Some(p);
            }
        }
    }
}

/// Floyd–Warshall distances over the retained edges (`+inf` when
/// disconnected).
pub fn all_pairs_distances(graph: &ShapeGraph) -> DMatrix<f64> {
    let n = graph.len();
    let mut d = DMatrix::from_element(n, n, f64::INFINITY);
    for u in 0..n {
        d[(u, u)] = 0.0;
        for v in graph.neighbors(u) {
            d[(u, v)] = graph.weight(u, v);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[(i, k)] + d[(k, j)];
                if via < d[(i, j)] {
                    d[(i, j)] = via;
                }
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;

    fn graph(w: &[f64], n: usize) -> ShapeGraph {
        let ids = (0..n).map(|i| format!("s{i}")).collect();
        ShapeGraph::from_weights(ids, DMatrix::from_row_slice(n, n, w), Topology::Full).unwrap()
    }

    #[test]
    fn detour_beats_heavy_edge() {
        let g = graph(&[0.0, 5.0, 1.0, 5.0, 0.0, 1.0, 1.0, 1.0, 0.0], 3);
        assert_eq!(shortest_path(&g, 0, 1).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn ties_go_to_the_smaller_sequence() {
        // 0-1-3 and 0-2-3 both weigh 2, the direct edge 3
        let w = [
            0.0, 1.0, 1.0, 3.0, //
            1.0, 0.0, 9.0, 1.0, //
            1.0, 9.0, 0.0, 1.0, //
            3.0, 1.0, 1.0, 0.0,
        ];
        let g = graph(&w, 4);
        assert_eq!(shortest_path(&g, 0, 3).unwrap(), vec![0, 1, 3]);
        assert_eq!(shortest_path(&g, 3, 0).unwrap(), vec![3, 1, 0]);
    }

    #[test]
    fn self_query_is_rejected() {
        let g = graph(&[0.0, 1.0, 1.0, 0.0], 2);
        assert!(shortest_path(&g, 1, 1).is_err());
        assert!(shortest_path(&g, 0, 2).is_err());
    }

    #[test]
    fn floyd_warshall_on_a_chain() {
        let w = [0.0, 1.0, 9.0, 1.0, 0.0, 2.0, 9.0, 2.0, 0.0];
        let ids = (0..3).map(|i| format!("s{i}")).collect();
        let g = ShapeGraph::from_weights(ids, DMatrix::from_row_slice(3, 3, &w), Topology::Mst)
            .unwrap();
        let d = all_pairs_distances(&g);
        assert_eq!(d[(0, 2)], 3.0);
        assert_eq!(d[(2, 0)], 3.0);
    }
}
