//! Communication graphs and consensus matrices.
//!
//! Agents communicate over a fixed undirected graph. Consensus mixing uses
//! the Metropolis weight matrix `W` with `w_ij = 1/(1 + max(d_i, d_j))` on
//! edges and `w_ii = 1 - sum_j w_ij`; the Perron matrix `P = I - L` of the
//! weighted Laplacian then equals `W` itself and is symmetric doubly
//! stochastic with nonnegative entries. Its second-largest eigenvalue
//! magnitude `lambda2` governs how fast disagreement contracts.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{substream, StreamPurpose};

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from distinct undirected edges. Rejects self-loops,
    /// duplicates, and out-of-range endpoints. Connectivity is *not*
    /// required here; operations that need it check [`Self::is_connected`].
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("graph must have at least one node".into()));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Input(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Input(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Input("duplicate edge".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges: normalized,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Neighbors of `node` in ascending order.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn is_connected(&self) -> bool {
        self.component_from(0).len() == self.n
    }

    fn component_from(&self, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([start]);
        let mut out = Vec::new();
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        out
    }

    /// Nodes of the largest connected component (ties broken by the
    /// earliest BFS discovery, which is deterministic).
    pub fn largest_component(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        let mut best: Vec<usize> = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let comp = self.component_from(start);
            for &v in &comp {
                seen[v] = true;
            }
            if comp.len() > best.len() {
                best = comp;
            }
        }
        best
    }
}

/// Consensus operators derived from a connected graph.
#[derive(Debug, Clone)]
pub struct ConsensusMatrices {
    /// Metropolis weight matrix `W`.
    pub weights: DMatrix<f64>,
    /// Perron matrix `P = I - L`; equal to `W` under Metropolis weights.
    pub perron: DMatrix<f64>,
    /// Second-largest eigenvalue magnitude of `P`; `0` for a single node.
    pub lambda2: f64,
}

/// Metropolis weight matrix of a connected graph:
/// `w_ij = 1/(1 + max(d_i, d_j))` on edges, zero off-edges, and a diagonal
/// that completes each row to one. Symmetric with entries in `[0, 1]`.
pub fn metropolis_weights(graph: &CommGraph) -> Result<DMatrix<f64>> {
    if !graph.is_connected() {
        return Err(Error::Input(
            "metropolis weights require a connected graph".into(),
        ));
    }
    let n = graph.n();
    let mut w = DMatrix::zeros(n, n);
    for &(i, j) in graph.edges() {
        let v = 1.0 / (1.0 + graph.degree(i).max(graph.degree(j)) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = graph.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    Ok(w)
}

/// Builds the Perron matrix and its spectral data for a connected graph.
pub fn perron_matrix(graph: &CommGraph) -> Result<ConsensusMatrices> {
    let weights = metropolis_weights(graph)?;
    // P = I - L with L the weighted Laplacian of W; the diagonal completion
    // above makes that identical to W.
    let perron = weights.clone();
    let lambda2 = if graph.n() == 1 {
        0.0
    } else {
        let eigen = nalgebra::SymmetricEigen::new(perron.clone());
        let mut magnitudes: Vec<f64> = eigen.eigenvalues.iter().map(|v| v.abs()).collect();
        if magnitudes.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "eigendecomposition of the Perron matrix failed".into(),
            ));
        }
        magnitudes.sort_by(|a, b| b.partial_cmp(a).unwrap());
        magnitudes[1]
    };
    Ok(ConsensusMatrices {
        weights,
        perron,
        lambda2,
    })
}

/// Named graph topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Path,
    Cycle,
    Star,
    Complete,
    ErdosRenyi,
}

/// Generates a connected graph of the given kind. `p` and `seed` are only
/// consulted for `ErdosRenyi`, which resamples on a fresh seed stream until
/// connected and gives up after 1000 attempts.
pub fn gen_graph(kind: GraphKind, n: usize, p: f64, seed: u64) -> Result<CommGraph> {
    if n == 0 {
        return Err(Error::Input("graph must have at least one node".into()));
    }
    match kind {
        GraphKind::Path => CommGraph::new(n, (1..n).map(|i| (i - 1, i))),
        GraphKind::Cycle => {
            let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
            if n >= 3 {
                edges.push((n - 1, 0));
            }
            CommGraph::new(n, edges)
        }
        GraphKind::Star => CommGraph::new(n, (1..n).map(|i| (0, i))),
        GraphKind::Complete => {
            CommGraph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
        }
        GraphKind::ErdosRenyi => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Input(format!(
                    "erdos-renyi edge probability must be in (0, 1], got {p}"
                )));
            }
            const MAX_ATTEMPTS: u64 = 1000;
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng = substream(seed, StreamPurpose::Graph, attempt);
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if rng.random::<f64>() < p {
                            edges.push((i, j));
                        }
                    }
                }
                let graph = CommGraph::new(n, edges)?;
                if graph.is_connected() {
                    return Ok(graph);
                }
            }
            Err(Error::Generation(format!(
                "no connected erdos-renyi graph with n = {n}, p = {p} \
                 after {MAX_ATTEMPTS} attempts"
            )))
        }
    }
}

/// Parses a whitespace-separated edge list. Lines starting with `#` are
/// comments and blank lines are skipped; self-loops and duplicate edges are
/// dropped. Node ids are compacted to `0..n` in first-appearance order.
/// Connectivity is not required.
pub fn load_edge_list(text: &str) -> Result<CommGraph> {
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut order = 0usize;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut seen: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let mut tokens = line.split_whitespace();
        let (a, b) = match (tokens.next(), tokens.next(), tokens.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected two node ids, got {line:?}"),
                })
            }
        };
        let parse = |tok: &str| -> Result<u64> {
            tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid node id {tok:?}"),
            })
        };
        let (a, b) = (parse(a)?, parse(b)?);
        let mut intern = |id: u64| -> usize {
            *ids.entry(id).or_insert_with(|| {
                let v = order;
                order += 1;
                v
            })
        };
        let (ia, ib) = (intern(a), intern(b));
        if ia == ib {
            continue;
        }
        let key = (ia.min(ib), ia.max(ib));
        if seen.insert(key) {
            edges.push(key);
        }
    }
    CommGraph::new(order, edges)
}

/// Induced subgraph on `k` nodes reached first by a BFS from a seeded
/// random start inside the largest component. The result is connected and
/// relabeled `0..k` in visit order.
pub fn sample_connected_subgraph(graph: &CommGraph, k: usize, seed: u64) -> Result<CommGraph> {
    if k == 0 || k > graph.n() {
        return Err(Error::Input(format!(
            "subgraph size {k} out of range 1..={}",
            graph.n()
        )));
    }
    let component = graph.largest_component();
    if component.len() < k {
        return Err(Error::Input(format!(
            "largest connected component has {} nodes, need {k}",
            component.len()
        )));
    }
    let mut sorted = component;
    sorted.sort_unstable();
    let mut rng = substream(seed, StreamPurpose::Subsample, 0);
    let start = sorted[rng.random_range(0..sorted.len())];

    let mut label: HashMap<usize, usize> = HashMap::new();
    let mut queue = std::collections::VecDeque::from([start]);
    label.insert(start, 0);
    let mut visited = vec![start];
    while let Some(u) = queue.pop_front() {
        if visited.len() == k {
            break;
        }
        for &v in graph.neighbors(u) {
            if visited.len() == k {
                break;
            }
            if !label.contains_key(&v) {
                label.insert(v, visited.len());
                visited.push(v);
                queue.push_back(v);
            }
        }
    }
    debug_assert_eq!(visited.len(), k);
    let edges = graph.edges().iter().filter_map(|&(a, b)| {
        match (label.get(&a), label.get(&b)) {
            (Some(&la), Some(&lb)) => Some((la, lb)),
            _ => None,
        }
    });
    CommGraph::new(k, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;

    /// Random spanning tree plus extra edges: connected by construction.
    pub(crate) fn random_connected(n: usize, extra: usize, seed: u64) -> CommGraph {
        let mut rng = substream(seed, StreamPurpose::Graph, 0);
        let mut edges: std::collections::HashSet<(usize, usize)> = (1..n)
            .map(|i| {
                let p = rng.random_range(0..i);
                (p, i)
            })
            .collect();
        for _ in 0..extra {
            if n < 2 {
                break;
            }
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        CommGraph::new(n, edges).unwrap()
    }

    #[test]
    fn metropolis_single_node() {
        let g = CommGraph::new(1, []).unwrap();
        let w = metropolis_weights(&g).unwrap();
        assert_eq!(w, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn metropolis_path_three() {
        let g = gen_graph(GraphKind::Path, 3, 0.0, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        assert_abs_diff_eq!(w[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(1, 2)], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(w[(0, 2)], 0.0);
        assert_abs_diff_eq!(w[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(1, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(2, 2)], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn metropolis_complete_graph() {
        let n = 6;
        let g = gen_graph(GraphKind::Complete, n, 0.0, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_abs_diff_eq!(w[(i, j)], 1.0 / n as f64, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn metropolis_star_diagonal_nonnegative() {
        // The star is the topology where the textbook max-form weights
        // would push the hub diagonal negative.
        let g = gen_graph(GraphKind::Star, 8, 0.0, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        assert!(w[(0, 0)] >= 0.0);
    }

    #[test]
    fn metropolis_rejects_disconnected() {
        let g = CommGraph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(metropolis_weights(&g), Err(Error::Input(_))));
    }

    #[test]
    fn perron_path_three_spectrum() {
        let g = gen_graph(GraphKind::Path, 3, 0.0, 0).unwrap();
        let m = perron_matrix(&g).unwrap();
        assert_abs_diff_eq!(m.lambda2, 2.0 / 3.0, epsilon = 1e-10);
        let eigen = nalgebra::SymmetricEigen::new(m.perron.clone());
        let mut vals: Vec<f64> = eigen.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[1], 2.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[2], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn perron_complete_rank_one() {
        let m = perron_matrix(&gen_graph(GraphKind::Complete, 5, 0.0, 0).unwrap()).unwrap();
        assert!(m.lambda2 <= 1e-10);
        for i in 0..5 {
            for j in 0..5 {
                assert_abs_diff_eq!(m.perron[(i, j)], 0.2, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn perron_single_node() {
        let m = perron_matrix(&CommGraph::new(1, []).unwrap()).unwrap();
        assert_eq!(m.perron, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(m.lambda2, 0.0);
    }

    #[test]
    fn gen_graph_shapes() {
        let path = gen_graph(GraphKind::Path, 3, 0.0, 0).unwrap();
        assert_eq!(path.edges(), &[(0, 1), (1, 2)]);
        let complete = gen_graph(GraphKind::Complete, 4, 0.0, 0).unwrap();
        assert_eq!(complete.edge_count(), 6);
        let cycle = gen_graph(GraphKind::Cycle, 5, 0.0, 0).unwrap();
        assert_eq!(cycle.edge_count(), 5);
        assert!(cycle.is_connected());
        let two_cycle = gen_graph(GraphKind::Cycle, 2, 0.0, 0).unwrap();
        assert_eq!(two_cycle.edge_count(), 1);
        let star = gen_graph(GraphKind::Star, 5, 0.0, 0).unwrap();
        assert_eq!(star.degree(0), 4);
    }

    #[test]
    fn erdos_renyi_connected_and_deterministic() {
        let a = gen_graph(GraphKind::ErdosRenyi, 100, 0.04, 17).unwrap();
        let b = gen_graph(GraphKind::ErdosRenyi, 100, 0.04, 17).unwrap();
        assert!(a.is_connected());
        assert_eq!(a, b);
        let c = gen_graph(GraphKind::ErdosRenyi, 100, 0.04, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn erdos_renyi_reports_exhaustion() {
        let err = gen_graph(GraphKind::ErdosRenyi, 200, 1e-9, 0).unwrap_err();
        match err {
            Error::Generation(msg) => assert!(msg.contains("1000 attempts"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn edge_list_basic() {
        let g = load_edge_list("0 1\n1 2\n").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn edge_list_dedup_and_self_loops() {
        let g = load_edge_list("# c\n5 7\n7 5\n5 5\n").unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn edge_list_first_appearance_order() {
        let g = load_edge_list("9 4\n4 2\n").unwrap();
        // 9 -> 0, 4 -> 1, 2 -> 2
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn edge_list_malformed_line() {
        let err = load_edge_list("0 1\noops\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let err = load_edge_list("0 1\n1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn edge_list_counting() {
        let mut text = String::from("# synthetic\n");
        for i in 0..10_000u64 {
            text.push_str(&format!("{} {}\n", i, i + 1));
        }
        let g = load_edge_list(&text).unwrap();
        assert_eq!(g.n(), 10_001);
        assert_eq!(g.edge_count(), 10_000);
    }

    #[test]
    fn subgraph_full_and_single() {
        let g = random_connected(20, 15, 5);
        let full = sample_connected_subgraph(&g, 20, 9).unwrap();
        assert_eq!(full.n(), 20);
        assert_eq!(full.edge_count(), g.edge_count());
        let single = sample_connected_subgraph(&g, 1, 9).unwrap();
        assert_eq!(single.n(), 1);
        assert_eq!(single.edge_count(), 0);
    }

    #[test]
    fn subgraph_connected_and_deterministic() {
        let g = gen_graph(GraphKind::ErdosRenyi, 100, 0.05, 3).unwrap();
        let a = sample_connected_subgraph(&g, 10, 42).unwrap();
        let b = sample_connected_subgraph(&g, 10, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        assert_eq!(a.n(), 10);
    }

    #[test]
    fn subgraph_rejects_undersized_component() {
        let g = CommGraph::new(5, [(0, 1), (2, 3)]).unwrap();
        assert!(sample_connected_subgraph(&g, 3, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn perron_doubly_stochastic(n in 1usize..50, extra in 0usize..30, seed in 0u64..1000) {
            let g = random_connected(n, extra, seed);
            let m = perron_matrix(&g).unwrap();
            let p = &m.perron;
            for i in 0..n {
                let mut row = 0.0;
                let mut col = 0.0;
                for j in 0..n {
                    prop_assert!(p[(i, j)] >= -1e-12);
                    prop_assert!(p[(i, j)] <= 1.0 + 1e-12);
                    prop_assert!((p[(i, j)] - p[(j, i)]).abs() <= 1e-12);
                    row += p[(i, j)];
                    col += p[(j, i)];
                }
                prop_assert!((row - 1.0).abs() <= 1e-12);
                prop_assert!((col - 1.0).abs() <= 1e-12);
            }
            prop_assert!(m.lambda2 < 1.0);
        }

        #[test]
        fn consensus_contraction(n in 2usize..30, extra in 0usize..20, seed in 0u64..500) {
            let g = random_connected(n, extra, seed);
            let m = perron_matrix(&g).unwrap();
            let mut rng = substream(seed, StreamPurpose::Subsample, 7);
            let v0 = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let avg = v0.sum() / n as f64;
            let ones = DVector::from_element(n, avg);
            let base = (&v0 - &ones).norm();
            let mut v = v0;
            for k in 1..=50usize {
                v = &m.perron * v;
                let dev = (&v - &ones).norm();
                prop_assert!(
                    dev <= base * (m.lambda2.powi(k as i32) + 1e-9),
                    "k={k}: {dev} vs {}",
                    base * m.lambda2.powi(k as i32)
                );
            }
        }
    }
}
