use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Largest node count for which the Hamiltonian path is found by
/// enumerating all permutations.
pub const TSP_EXACT_LIMIT: usize = 9;

/// How a TSP path was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TspSolver {
    Exact,
    Heuristic,
}

/// Undirected edge, stored with `a < b`.
pub type Edge = (usize, usize);

fn edge(a: usize, b: usize) -> Edge {
    (a.min(b), a.max(b))
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Kruskal over all pairs; equal weights are taken in `(a, b)` order.
pub fn minimum_spanning_tree(weights: &DMatrix<f64>) -> Vec<Edge> {
    let n = weights.nrows();
    let mut candidates: Vec<Edge> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    candidates.sort_by(|&(a, b), &(c, d)| {
        weights[(a, b)]
            .total_cmp(&weights[(c, d)])
            .then((a, b).cmp(&(c, d)))
    });
    let mut sets = DisjointSets::new(n);
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for (a, b) in candidates {
        if sets.union(a, b) {
            tree.push((a, b));
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    tree.sort_unstable();
    tree
}

/// Node minimizing the sum of its incident weights, ties to the smallest index.
pub fn star_center(weights: &DMatrix<f64>) -> usize {
    let n = weights.nrows();
    let incident = |c: usize| {
        (0..n)
            .filter(|&o| o != c)
            .map(|o| weights[(c, o)])
            .sum::<f64>()
    };
    let mut best = (f64::INFINITY, 0);
    for c in 0..n {
        let s = incident(c);
        if s < best.0 {
            best = (s, c);
        }
    }
    best.1
}

pub fn star_edges(weights: &DMatrix<f64>) -> Vec<Edge> {
    let center = star_center(weights);
    let mut edges: Vec<Edge> = (0..weights.nrows())
        .filter(|&o| o != center)
        .map(|o| edge(center, o))
        .collect();
    edges.sort_unstable();
    edges
}

/// Total weight of a node sequence, summed left to right.
pub fn path_weight(weights: &DMatrix<f64>, path: &[usize]) -> f64 {
    path.windows(2)
        .map(|w| weights[(w[0], w[1])])
        .fold(0.0, |acc, w| acc + w)
}

/// Shortest Hamiltonian path: exhaustive for small `n`, otherwise the best
/// nearest-neighbor tour over all start nodes polished by 2-opt.
pub fn hamiltonian_path(weights: &DMatrix<f64>) -> (Vec<usize>, TspSolver) {
    let n = weights.nrows();
    if n <= TSP_EXACT_LIMIT {
        (exhaustive_path(weights), TspSolver::Exact)
    } else {
        (heuristic_path(weights), TspSolver::Heuristic)
    }
}

/// First minimum in lexicographic permutation order.
fn exhaustive_path(weights: &DMatrix<f64>) -> Vec<usize> {
    let n = weights.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (path_weight(weights, &perm), perm.clone());
    while next_permutation(&mut perm) {
        let w = path_weight(weights, &perm);
        if w < best.0 {
            best = (w, perm.clone());
        }
    }
    best.1
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len())
        .rev()
        .find(|&j| p[j] > p[i - 1])
        .expect("pivot has a successor");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn heuristic_path(weights: &DMatrix<f64>) -> Vec<usize> {
    let n = weights.nrows();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for start in 0..n {
        let mut path = nearest_neighbor_path(weights, start);
        two_opt(weights, &mut path);
        let w = path_weight(weights, &path);
        if best.as_ref().is_none_or(|(bw, _)| w < *bw) {
            best = Some((w, path));
        }
    }
    best.map(|(_, p)| p).unwrap_or_default()
}

fn nearest_neighbor_path(weights: &DMatrix<f64>, start: usize) -> Vec<usize> {
    let n = weights.nrows();
    let mut visited = vec![false; n];
    let mut path = vec![start];
    visited[start] = true;
    while path.len() < n {
        let last = *path.last().expect("path is non-empty");
        let next = (0..n)
            .filter(|&v| !visited[v])
            .min_by(|&a, &b| {
                weights[(last, a)]
                    .total_cmp(&weights[(last, b)])
                    .then(a.cmp(&b))
            })
            .expect("an unvisited node remains");
        visited[next] = true;
        path.push(next);
    }
    path
}

/// Reverses segments `path[i..=j]` while that shortens the open path.
fn two_opt(weights: &DMatrix<f64>, path: &mut [usize]) {
    let n = path.len();
    let w = |a: usize, b: usize| weights[(a, b)];
    loop {
        let mut improved = false;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let mut delta = 0.0;
                if i > 0 {
                    delta += w(path[i - 1], path[j]) - w(path[i - 1], path[i]);
                }
                if j + 1 < n {
                    delta += w(path[i], path[j + 1]) - w(path[j], path[j + 1]);
                }
                if delta < -1e-12 {
                    path[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

pub fn path_edges(path: &[usize]) -> Vec<Edge> {
    let mut edges: Vec<Edge> = path.windows(2).map(|w| edge(w[0], w[1])).collect();
    edges.sort_unstable();
    edges
}
