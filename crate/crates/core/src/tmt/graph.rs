//! Local transition graph and minimum multi-hop transition cost.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::sinkhorn::{SinkhornParams, TransportSolver};
use crate::affinity::{Neighbors, ReciprocalSets};
use crate::config::HopRegion;
use crate::error::{Error, Result};
use crate::geometry::CostMatrix;
use crate::lse::StateDistribution;
use crate::matrix::DenseMatrix;
use crate::par;

/// Undirected weighted graph over the instances. Each unordered pair
/// carries one cost, so `d'` is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    directed_edges: usize,
}

/// Counters gathered while solving the edge costs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdgeStats {
    pub solves: usize,
    pub non_converged: usize,
    pub log_domain: usize,
    pub max_marginal_error: f64,
}

impl TransitionGraph {
    /// Build from explicit `(i, j, cost)` triples. A pair listed twice keeps
    /// the smaller cost.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, c) in edges {
            if i >= n || j >= n {
                return Err(Error::Shape(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            if !(c >= 0.0 && c.is_finite()) {
                return Err(crate::error::invalid(
                    "edge cost",
                    format!("{c} on ({i}, {j})"),
                ));
            }
            if i == j {
                continue;
            }
            adjacency[i].push((j, c));
            adjacency[j].push((i, c));
        }
        for list in &mut adjacency {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            list.dedup_by_key(|e| e.0);
        }
        let directed_edges = adjacency.iter().map(Vec::len).sum();
        Ok(Self {
            adjacency,
            directed_edges,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    /// Neighbors of `i` with their edge costs, ascending by index.
    pub fn edges(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Cost of the edge `{i, j}` if present.
    pub fn edge_cost(&self, i: usize, j: usize) -> Option<f64> {
        let list = &self.adjacency[i];
        list.binary_search_by_key(&j, |e| e.0)
            .ok()
            .map(|p| list[p].1)
    }

    /// Number of directed relations in the hop structure the graph was built
    /// from.
    pub fn directed_edge_count(&self) -> usize {
        self.directed_edges
    }

    pub fn undirected_edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Per-node hop lists for the chosen local region, self excluded.
pub fn hop_lists(
    region: HopRegion,
    reciprocal_k1: &ReciprocalSets,
    neighbors_k2: &Neighbors,
) -> Vec<Vec<usize>> {
    let n = reciprocal_k1.n();
    (0..n)
        .map(|i| {
            let src = match region {
                HopRegion::ReciprocalK1 => reciprocal_k1.of(i),
                HopRegion::KnnK2 => neighbors_k2.of(i),
            };
            src.iter().copied().filter(|&j| j != i).collect()
        })
        .collect()
}

/// Solve one regularized transport problem per connected pair. `hops[i]`
/// lists the nodes reachable from `i` in one step. With `excess_only` the
/// solves go through [`TransportSolver::solve_excess`].
pub fn build_transition_graph(
    embeddings: &[StateDistribution],
    hops: &[Vec<usize>],
    cost: &CostMatrix,
    params: SinkhornParams,
    excess_only: bool,
) -> Result<(TransitionGraph, EdgeStats)> {
    let n = embeddings.len();
    if hops.len() != n {
        return Err(Error::Shape(format!(
            "{} hop lists for {n} embeddings",
            hops.len()
        )));
    }
    let solver = TransportSolver::new(cost, params)?.with_kernel();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut directed = 0;
    for (i, list) in hops.iter().enumerate() {
        for &j in list {
            if j >= n {
                return Err(Error::Shape(format!("hop target {j} outside {n} nodes")));
            }
            if j != i {
                directed += 1;
                pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();

    let solved = par::map_indices(pairs.len(), |e| {
        let (i, j) = pairs[e];
        let outcome = if excess_only {
            solver.solve_excess(&embeddings[i], &embeddings[j])
        } else {
            solver.solve(&embeddings[i], &embeddings[j])
        };
        // drop the plan right away; only the summary is kept
        outcome.map(|o| (o.cost, o.converged, o.log_domain, o.marginal_error))
    });
    let mut stats = EdgeStats::default();
    let mut edges = Vec::with_capacity(pairs.len());
    for (&(i, j), outcome) in pairs.iter().zip(solved) {
        let (cost, converged, log_domain, marginal_error) = outcome?;
        stats.solves += 1;
        stats.non_converged += usize::from(!converged);
        stats.log_domain += usize::from(log_domain);
        stats.max_marginal_error = stats.max_marginal_error.max(marginal_error);
        edges.push((i, j, cost.max(0.0)));
    }
    let mut graph = TransitionGraph::from_edges(n, &edges)?;
    graph.directed_edges = directed;
    Ok((graph, stats))
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path costs from `query`; unreachable nodes get
/// `f64::INFINITY`.
pub fn min_transition_cost(graph: &TransitionGraph, query: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.n()];
    let mut done = vec![false; graph.n()];
    let mut heap = BinaryHeap::new();
    dist[query] = 0.0;
    heap.push(Entry {
        dist: 0.0,
        node: query,
    });
    while let Some(Entry { dist: du, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in graph.edges(u) {
            let cand = du + w;
            if cand < dist[v] {
                dist[v] = cand;
                heap.push(Entry {
                    dist: cand,
                    node: v,
                });
            }
        }
    }
    dist
}

/// All-pairs `d'`, exactly symmetric.
pub fn all_pairs_transition_cost(graph: &TransitionGraph) -> DenseMatrix {
    let n = graph.n();
    let mut out = DenseMatrix::zeros(n, n);
    par::for_each_row(out.as_mut_slice(), n.max(1), |q, row| {
        row.copy_from_slice(&min_transition_cost(graph, q));
    });
    for i in 0..n {
        for j in i + 1..n {
            let m = out.get(i, j).min(out.get(j, i));
            out.set(i, j, m);
            out.set(j, i, m);
        }
    }
    out
}
