use std::collections::VecDeque;

/// Reverse Cuthill-McKee ordering of a symmetric adjacency structure.
///
/// Returns `perm` with `perm[new] = old`. Each connected component starts
/// from a pseudo-peripheral vertex found by repeated BFS.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.sort_by_key(|&v| (degree[v], v));

    for &seed in &seeds {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adjacency, &degree, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adjacency[u]
                .iter()
                .copied()
                .filter(|&v| !visited[v])
                .collect();
            next.sort_by_key(|&v| (degree[v], v));
            for v in next {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adjacency: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adjacency.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let l = level[u].unwrap();
        for &v in &adjacency[u] {
            if level[v].is_none() {
                level[v] = Some(l + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn pseudo_peripheral(adjacency: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut current = seed;
    let mut eccentricity = 0;
    for _ in 0..8 {
        let levels = bfs_levels(adjacency, current);
        let depth = levels.iter().flatten().copied().max().unwrap_or(0);
        if depth <= eccentricity && current != seed {
            break;
        }
        eccentricity = depth;
        let candidate = (0..adjacency.len())
            .filter(|&v| levels[v] == Some(depth))
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(current);
        if candidate == current {
            break;
        }
        current = candidate;
    }
    current
}
