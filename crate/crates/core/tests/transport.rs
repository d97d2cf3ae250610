mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rerank_core::lse::StateDistribution;
use rerank_core::tmt::{
    exact_w1, min_transition_cost, round_to_marginals, sinkhorn_w1, sinkhorn_w1_excess,
    SinkhornParams, TransitionGraph,
};
use rerank_core::CostMatrix;

fn support_max_cost(p: &StateDistribution, q: &StateDistribution, cost: &CostMatrix) -> f64 {
    let mut m: f64 = 0.0;
    for &a in p.support() {
        for &b in q.support() {
            m = m.max(cost.get(a, b));
        }
    }
    m
}

fn params(epsilon: f64) -> SinkhornParams {
    SinkhornParams {
        epsilon,
        tol: 1e-10,
        maxiter: 1_000_000,
    }
}

#[test]
fn sinkhorn_approaches_linear_program() {
    let mut rng = rng(31);
    for case in 0..100 {
        let n = rng.random_range(4..=12);
        let cost = random_cost(&mut rng, n, 3);
        let p = random_distribution(&mut rng, n, 8);
        let q = random_distribution(&mut rng, n, 8);
        let lp = exact_w1(&p, &q, &cost).unwrap();
        let c_max = support_max_cost(&p, &q, &cost).max(1e-12);
        let slack = 1e-9 * c_max;
        let mut previous = f64::INFINITY;
        let mut last = f64::NAN;
        for halving in 0..=6 {
            let eps = 1e-3 * c_max * 2f64.powi(6 - halving);
            let out = sinkhorn_w1(&p, &q, &cost, params(eps)).unwrap();
            assert!(out.converged, "case {case} eps {eps}");
            let gap = (out.cost - lp).abs();
            assert!(
                gap <= previous + slack,
                "case {case}: gap grew from {previous} to {gap} at eps {eps}"
            );
            assert!(out.cost >= lp - slack);
            previous = gap;
            last = out.cost;
        }
        assert!(
            (last - lp).abs() <= 0.02 * lp + slack,
            "case {case}: sinkhorn {last} vs lp {lp}"
        );
    }
}

#[test]
fn excess_transport_matches_linear_program() {
    let mut rng = rng(32);
    for case in 0..60 {
        let n = rng.random_range(4..=12);
        let cost = random_cost(&mut rng, n, 2);
        let p = random_distribution(&mut rng, n, 6);
        let q = random_distribution(&mut rng, n, 6);
        let lp = exact_w1(&p, &q, &cost).unwrap();
        let eps = 1e-3 * support_max_cost(&p, &q, &cost).max(1e-12);
        let out = sinkhorn_w1_excess(&p, &q, &cost, params(eps)).unwrap();
        assert!(out.converged);
        assert!(
            (out.cost - lp).abs() <= 0.02 * lp + 1e-9,
            "case {case}: {} vs {lp}",
            out.cost
        );
    }
}

#[test]
fn plans_have_exact_marginals() {
    let mut rng = rng(33);
    for _ in 0..30 {
        let n = 10;
        let cost = random_cost(&mut rng, n, 2);
        let p = random_distribution(&mut rng, n, 8);
        let q = random_distribution(&mut rng, n, 8);
        let out = sinkhorn_w1(&p, &q, &cost, params(0.05)).unwrap();
        for (a, b) in out.plan.row_sums().iter().zip(p.mass()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in out.plan.col_sums().iter().zip(q.mass()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(out.plan.q.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn rounding_repairs_marginals() {
    let p = [0.5, 0.5];
    let q = [0.25, 0.75];
    let plan = round_to_marginals(vec![0.3, 0.3, 0.1, 0.1], &p, &q);
    let rows = [plan[0] + plan[1], plan[2] + plan[3]];
    let cols = [plan[0] + plan[2], plan[1] + plan[3]];
    for (a, b) in rows.iter().zip(&p) {
        assert!((a - b).abs() < 1e-15);
    }
    for (a, b) in cols.iter().zip(&q) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn dijkstra_matches_path_enumeration() {
    let mut rng = rng(34);
    for case in 0..30 {
        let n = rng.random_range(2..=8);
        let density = rng.random_range(0.2..0.9);
        let graph = if case % 2 == 0 {
            random_graph(&mut rng, n, density)
        } else {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random_bool(density) {
                        edges.push((i, j, rng.random_range(0.0..3.0)));
                    }
                }
            }
            TransitionGraph::from_edges(n, &edges).unwrap()
        };
        for source in 0..n {
            let fast = min_transition_cost(&graph, source);
            let slow = enumerate_paths(&graph, source);
            assert_eq!(fast, slow, "case {case} source {source}");
        }
    }
}

#[test]
fn unreachable_nodes_are_infinite() {
    let g = TransitionGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 0.5)]).unwrap();
    assert_eq!(min_transition_cost(&g, 0), vec![0.0, 1.0, f64::INFINITY, f64::INFINITY]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transport_cost_is_symmetric_and_nonnegative(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let cost = random_cost(&mut rng, 9, 2);
        let p = random_distribution(&mut rng, 9, 6);
        let q = random_distribution(&mut rng, 9, 6);
        let pq = exact_w1(&p, &q, &cost).unwrap();
        let qp = exact_w1(&q, &p, &cost).unwrap();
        prop_assert!(pq >= -1e-12);
        prop_assert!((pq - qp).abs() <= 1e-9);
        prop_assert!(exact_w1(&p, &p, &cost).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn lp_obeys_triangle_inequality(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let cost = random_cost(&mut rng, 10, 2);
        let a = random_distribution(&mut rng, 10, 4);
        let b = random_distribution(&mut rng, 10, 4);
        let c = random_distribution(&mut rng, 10, 4);
        let ab = exact_w1(&a, &b, &cost).unwrap();
        let bc = exact_w1(&b, &c, &cost).unwrap();
        let ac = exact_w1(&a, &c, &cost).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn shortest_paths_satisfy_edge_relaxation(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = rng(seed);
        let g = random_graph(&mut rng, n, 0.4);
        let dist = min_transition_cost(&g, 0);
        prop_assert_eq!(dist[0], 0.0);
        for u in 0..n {
            for &(v, c) in g.edges(u) {
                prop_assert!(dist[v] <= dist[u] + c);
            }
        }
    }
}
