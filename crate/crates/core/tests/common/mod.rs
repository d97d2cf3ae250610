//! Brute-force reference implementations and random instance builders shared
//! by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rerank_core::affinity::{build_ensemble, GraphEnsemble};
use rerank_core::bcd::WeightVector;
use rerank_core::config::SigmaStrategy;
use rerank_core::lse::StateDistribution;
use rerank_core::matrix::DenseMatrix;
use rerank_core::tmt::TransitionGraph;
use rerank_core::{euclidean_distance_matrix, ground_cost, CostMatrix, FeatureSet};

pub const FACTORS: [f64; 3] = [std::f64::consts::FRAC_1_SQRT_2, 1.0, std::f64::consts::SQRT_2];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut impl Rng, n: usize, d: usize) -> FeatureSet {
    let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureSet::with_index_ids(data, d).unwrap()
}

/// Ensemble over `n` random points in the plane with neighbor counts
/// derived from `k` and the default scale factors.
pub fn random_ensemble(rng: &mut impl Rng, n: usize, k: usize) -> GraphEnsemble {
    let dist = euclidean_distance_matrix(&random_points(rng, n, 2));
    build_ensemble(&dist, k, &FACTORS, SigmaStrategy::GlobalMeanKnn).unwrap()
}

pub fn random_simplex(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut beta: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let rest: f64 = beta[..m - 1].iter().sum();
    beta[m - 1] = 1.0 - rest;
    beta
}

pub fn random_matrix(rng: &mut impl Rng, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Solve `(I - A) F + F (I - A)^T = 2 (1 - alpha) E` through the explicit
/// `n^2 x n^2` Kronecker system, `A = sum_v alpha_v S_bar^v`.
pub fn kronecker_solution(ens: &GraphEnsemble, w: &WeightVector, e: &DenseMatrix) -> DenseMatrix {
    let n = ens.n();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (g, alpha) in ens.graphs.iter().zip(w.alphas()) {
        a += to_na(&g.s_bar.to_dense()) * alpha;
    }
    let b = DMatrix::<f64>::identity(n, n) - a;
    let id = DMatrix::<f64>::identity(n, n);
    // row-major vec: vec(B F) = (B kron I) vec F, vec(F B^T) = (I kron B) vec F
    let system = b.kronecker(&id) + id.kronecker(&b);
    let rhs = DVector::from_iterator(
        n * n,
        e.as_slice().iter().map(|v| 2.0 * (1.0 - w.alpha_sum()) * v),
    );
    let x = system.lu().solve(&rhs).expect("nonsingular Lyapunov system");
    DenseMatrix::from_vec(n, n, x.iter().copied().collect()).unwrap()
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Per-graph objective by the literal quadruple sum over `W`:
/// `1/4 sum_{i,j,k} W_ij [(F_ki/sqrt d_i - F_kj/sqrt d_j)^2 + (F_ik/sqrt d_i - F_jk/sqrt d_j)^2] + mu |F - E|^2`.
pub fn brute_objectives(f: &DenseMatrix, ens: &GraphEnsemble, e: &DenseMatrix, mu: f64) -> Vec<f64> {
    let n = f.rows();
    let reg: f64 = f
        .as_slice()
        .iter()
        .zip(e.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        * mu;
    ens.graphs
        .iter()
        .map(|g| {
            let w = g.w.to_dense();
            let d: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let wij = w.get(i, j);
                    if wij == 0.0 {
                        continue;
                    }
                    for k in 0..n {
                        let col = f.get(k, i) / d[i].sqrt() - f.get(k, j) / d[j].sqrt();
                        let row = f.get(i, k) / d[i].sqrt() - f.get(j, k) / d[j].sqrt();
                        total += wij * (col * col + row * row);
                    }
                }
            }
            0.25 * total + reg
        })
        .collect()
}

pub fn spectral_radius(m: &DenseMatrix) -> f64 {
    SymmetricEigen::new(to_na(m))
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

fn weight_objective(h: &[f64], lambda: f64, beta: &[f64]) -> f64 {
    let lin: f64 = h.iter().zip(beta).map(|(a, b)| a * b).sum();
    let quad: f64 = beta.iter().map(|b| b * b).sum();
    lin + 0.5 * lambda * quad
}

/// Minimizer over the simplex lattice with spacing `1 / steps`. All but the
/// last two coordinates are enumerated; for the last pair the objective is
/// a convex quadratic in one lattice variable, minimized exactly by checking
/// the integers around its stationary point.
pub fn grid_beta(h: &[f64], lambda: f64, steps: usize) -> Vec<f64> {
    let m = h.len();
    let mut best = (f64::INFINITY, vec![0usize; m]);
    let mut units = vec![0usize; m];
    grid_recurse(h, lambda, steps, 0, steps, &mut units, &mut best);
    best.1.iter().map(|&u| u as f64 / steps as f64).collect()
}

fn grid_recurse(
    h: &[f64],
    lambda: f64,
    steps: usize,
    pos: usize,
    left: usize,
    units: &mut Vec<usize>,
    best: &mut (f64, Vec<usize>),
) {
    let m = h.len();
    let s = steps as f64;
    if pos == m - 1 {
        units[pos] = left;
        consider(h, lambda, steps, units, best);
        return;
    }
    if pos == m - 2 {
        // f(x) = (h_a x + h_b (L - x)) / s + lambda/2 (x^2 + (L - x)^2) / s^2
        let (ha, hb) = (h[pos], h[pos + 1]);
        let l = left as f64;
        let stationary = l / 2.0 + (hb - ha) * s / (2.0 * lambda);
        let centre = stationary.floor().clamp(0.0, l) as usize;
        for x in centre.saturating_sub(1)..=(centre + 2).min(left) {
            units[pos] = x;
            units[pos + 1] = left - x;
            consider(h, lambda, steps, units, best);
        }
        return;
    }
    for x in 0..=left {
        units[pos] = x;
        grid_recurse(h, lambda, steps, pos + 1, left - x, units, best);
    }
}

fn consider(h: &[f64], lambda: f64, steps: usize, units: &[usize], best: &mut (f64, Vec<usize>)) {
    let beta: Vec<f64> = units.iter().map(|&u| u as f64 / steps as f64).collect();
    let v = weight_objective(h, lambda, &beta);
    if v < best.0 {
        *best = (v, units.to_vec());
    }
}

/// Exhaustive lattice search without the pairwise shortcut; for small `m`.
pub fn grid_beta_exhaustive(h: &[f64], lambda: f64, steps: usize) -> Vec<f64> {
    let m = h.len();
    let mut best = (f64::INFINITY, vec![0usize; m]);
    let mut units = vec![0usize; m];
    fn go(
        h: &[f64],
        lambda: f64,
        steps: usize,
        pos: usize,
        left: usize,
        units: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if pos == h.len() - 1 {
            units[pos] = left;
            consider(h, lambda, steps, units, best);
            return;
        }
        for x in 0..=left {
            units[pos] = x;
            go(h, lambda, steps, pos + 1, left - x, units, best);
        }
    }
    go(h, lambda, steps, 0, steps, &mut units, &mut best);
    best.1.iter().map(|&u| u as f64 / steps as f64).collect()
}

/// Pairwise coordinate descent on the simplex: repeatedly shift mass between
/// two coordinates by the exact one-dimensional minimizer.
pub fn coordinate_descent_beta(h: &[f64], lambda: f64) -> Vec<f64> {
    let m = h.len();
    let mut beta = vec![1.0 / m as f64; m];
    for _ in 0..100_000 {
        let mut moved: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let delta = (h[j] - h[i] + lambda * (beta[j] - beta[i])) / (2.0 * lambda);
                let delta = delta.clamp(-beta[i], beta[j]);
                beta[i] += delta;
                beta[j] -= delta;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-16 {
            break;
        }
    }
    beta
}

/// Random distribution over at most `max_support` of the first `n` nodes.
pub fn random_distribution(rng: &mut impl Rng, n: usize, max_support: usize) -> StateDistribution {
    let size = rng.random_range(1..=max_support.min(n));
    let mut nodes: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = rng.random_range(i..n);
        nodes.swap(i, j);
    }
    let raw: Vec<f64> = (0..size).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut entries: Vec<(usize, f64)> = nodes[..size]
        .iter()
        .zip(&raw)
        .map(|(&i, &w)| (i, w / total))
        .collect();
    let sum: f64 = entries.iter().map(|e| e.1).sum();
    entries[0].1 += 1.0 - sum;
    StateDistribution::new(entries).unwrap()
}

pub fn random_cost(rng: &mut impl Rng, n: usize, d: usize) -> CostMatrix {
    ground_cost(&euclidean_distance_matrix(&random_points(rng, n, d)), 1.0).unwrap()
}

/// Cheapest simple path from `source` to every node by depth-first
/// enumeration of all simple paths. Costs accumulate from the source.
pub fn enumerate_paths(graph: &TransitionGraph, source: usize) -> Vec<f64> {
    let n = graph.n();
    let mut best = vec![f64::INFINITY; n];
    let mut on_path = vec![false; n];
    fn dfs(g: &TransitionGraph, node: usize, cost: f64, on_path: &mut [bool], best: &mut [f64]) {
        if cost < best[node] {
            best[node] = cost;
        }
        on_path[node] = true;
        for &(next, c) in g.edges(node) {
            if !on_path[next] {
                dfs(g, next, cost + c, on_path, best);
            }
        }
        on_path[node] = false;
    }
    dfs(graph, source, 0.0, &mut on_path, &mut best);
    best
}

pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64) -> TransitionGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                // a coarse grid of weights so that ties between paths occur
                let c = rng.random_range(1..=8) as f64 * 0.25;
                edges.push((i, j, c));
            }
        }
    }
    TransitionGraph::from_edges(n, &edges).unwrap()
}
