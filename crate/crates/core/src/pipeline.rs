//! End-to-end re-ranking: diffusion, embedding, transition distance, blend.

use log::{debug, info, warn};

use crate::affinity::{build_ensemble, clamp_to_n, knn_sets, reciprocal_sets};
use crate::bcd::{bcd_solve, regularizer_matrix};
use crate::config::PipelineConfig;
use crate::error::{invalid, Result};
use crate::geometry::{
    euclidean_distance_matrix, ground_cost, DistanceMatrix, FeatureSet, RankedItem, Ranking,
};
use crate::lse::embed_all;
use crate::par;
use crate::tmt::{
    blend, build_transition_graph, default_epsilon, hop_lists, min_transition_cost, EdgeStats,
    SinkhornParams, TransitionGraph,
};

/// Diagnostics accumulated over every solved subproblem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub subproblems: usize,
    pub diffusion_iterations: usize,
    pub diffusion_unconverged: usize,
    pub sinkhorn: EdgeStats,
    pub epsilon: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
}

impl RunReport {
    /// True when some transport solve hit its iteration cap.
    pub fn has_nonconvergence(&self) -> bool {
        self.sinkhorn.non_converged > 0
    }

    fn absorb(&mut self, other: RunReport) {
        self.subproblems += other.subproblems;
        self.diffusion_iterations += other.diffusion_iterations;
        self.diffusion_unconverged += other.diffusion_unconverged;
        self.sinkhorn.solves += other.sinkhorn.solves;
        self.sinkhorn.non_converged += other.sinkhorn.non_converged;
        self.sinkhorn.log_domain += other.sinkhorn.log_domain;
        self.sinkhorn.max_marginal_error = self
            .sinkhorn
            .max_marginal_error
            .max(other.sinkhorn.max_marginal_error);
        self.epsilon.extend(other.epsilon);
        self.beta.extend(other.beta);
    }
}

#[derive(Debug, Clone)]
pub struct RerankOutput {
    pub rankings: Vec<Ranking>,
    pub report: RunReport,
}

/// Local sizes after clamping to the subproblem size.
struct Sizes {
    k1: usize,
    k2: usize,
}

fn local_sizes(config: &PipelineConfig, n: usize) -> Result<Sizes> {
    if n < 2 {
        return Err(invalid("features", "need at least two instances"));
    }
    let k1 = clamp_to_n("k1", config.k1, n);
    let mut k2 = clamp_to_n("k2", config.k2, n);
    if k2 >= k1 {
        k2 = k1 - 1;
        warn!("k2 reduced to {k2} to stay below k1 = {k1}");
    }
    if k2 == 0 {
        return Err(invalid("k2", "no room for a confident neighbor set"));
    }
    Ok(Sizes { k1, k2 })
}

/// Transition graph for the instances behind `dist`.
pub fn transition_graph(
    dist: &DistanceMatrix,
    config: &PipelineConfig,
) -> Result<(TransitionGraph, RunReport)> {
    let n = dist.n();
    let sizes = local_sizes(config, n)?;
    let k = clamp_to_n("k", config.k, n);
    let ensemble = build_ensemble(dist, k, &config.scale_factors, config.sigma)?;
    let e = regularizer_matrix(&ensemble, config.regularizer);
    let diffusion = bcd_solve(&ensemble, config, &e)?;
    debug!(
        "diffusion: {} iterations, beta = {:?}",
        diffusion.iterations,
        diffusion.weights.beta()
    );

    let nb = knn_sets(dist, sizes.k1)?;
    let rec_k1 = reciprocal_sets(&nb, sizes.k1)?;
    let nb_k2 = nb.truncated(sizes.k2)?;
    let rec_k2 = reciprocal_sets(&nb, sizes.k2)?;
    let emb = embed_all(&diffusion.f, &rec_k1, &nb_k2, &rec_k2, config.kappa)?;

    let cost = ground_cost(dist, config.gamma)?;
    let epsilon = config
        .epsilon
        .unwrap_or_else(|| default_epsilon(&emb.distributions, &cost));
    let params = SinkhornParams {
        epsilon,
        tol: config.sinkhorn_tol,
        maxiter: config.sinkhorn_maxiter,
    };
    let hops = hop_lists(config.hop_region, &rec_k1, &nb_k2);
    let (graph, stats) = build_transition_graph(
        &emb.distributions,
        &hops,
        &cost,
        params,
        config.excess_transport && config.gamma <= 1.0,
    )?;
    let report = RunReport {
        subproblems: 1,
        diffusion_iterations: diffusion.iterations,
        diffusion_unconverged: usize::from(!diffusion.converged),
        sinkhorn: stats,
        epsilon: vec![epsilon],
        beta: vec![diffusion.weights.beta().to_vec()],
    };
    Ok((graph, report))
}

/// Sort key: blended distance, then raw distance, then index.
fn order(items: &mut [(usize, f64, f64)]) {
    items.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.2.total_cmp(&b.2))
            .then(a.0.cmp(&b.0))
    });
}

/// Rank `candidates` (pairs of local index and raw distance) by the blend
/// with `d_prime`. Scores are non-decreasing.
fn blended_block(
    candidates: &[(usize, f64)],
    d_prime: &[f64],
    config: &PipelineConfig,
) -> Vec<(usize, f64)> {
    let (d_scale, p_scale) = if config.normalize_blend && config.theta != 1.0 {
        let dm = candidates.iter().map(|c| c.1).fold(0.0, f64::max);
        let pm = candidates
            .iter()
            .map(|c| d_prime[c.0])
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        (
            if dm > 0.0 { dm } else { 1.0 },
            if pm > 0.0 { pm } else { 1.0 },
        )
    } else {
        (1.0, 1.0)
    };
    let mut items: Vec<(usize, f64, f64)> = candidates
        .iter()
        .map(|&(j, d)| (j, blend(d / d_scale, d_prime[j] / p_scale, config.theta), d))
        .collect();
    order(&mut items);
    items
        .into_iter()
        .map(|(j, star, d)| (j, if star.is_finite() { star } else { d }))
        .collect()
}

fn to_ranking(query: usize, ordered: impl IntoIterator<Item = (usize, f64)>) -> Ranking {
    let mut floor = f64::NEG_INFINITY;
    let items = ordered
        .into_iter()
        .map(|(index, s)| {
            floor = floor.max(s);
            RankedItem {
                index,
                score: floor,
            }
        })
        .collect();
    Ranking { query, items }
}

fn check_queries(queries: &[usize], n: usize) -> Result<()> {
    match queries.iter().find(|&&q| q >= n) {
        Some(q) => Err(invalid(
            "queries",
            format!("index {q} outside {n} instances"),
        )),
        None => Ok(()),
    }
}

fn euclidean_order(dist: &DistanceMatrix, q: usize) -> Vec<(usize, f64)> {
    let mut items: Vec<(usize, f64)> = (0..dist.n())
        .filter(|&j| j != q)
        .map(|j| (j, dist.get(q, j)))
        .collect();
    items.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    items
}

/// Euclidean ranking of every other instance for each query.
pub fn baseline_rankings(
    features: &FeatureSet,
    queries: &[usize],
    config: &PipelineConfig,
) -> Result<Vec<Ranking>> {
    check_queries(queries, features.n())?;
    let dist = distances(features, config);
    Ok(par::map_indices(queries.len(), |qi| {
        let q = queries[qi];
        to_ranking(q, euclidean_order(&dist, q))
    }))
}

fn distances(features: &FeatureSet, config: &PipelineConfig) -> DistanceMatrix {
    if config.l2_normalize {
        euclidean_distance_matrix(&features.l2_normalized())
    } else {
        euclidean_distance_matrix(features)
    }
}

/// Re-rank every other instance for each query.
pub fn rerank(
    features: &FeatureSet,
    queries: &[usize],
    config: &PipelineConfig,
) -> Result<RerankOutput> {
    config.validate()?;
    check_queries(queries, features.n())?;
    let dist = distances(features, config);
    let n = dist.n();
    match config.rerank_depth {
        Some(depth) if depth + 1 < n => rerank_truncated(&dist, queries, config, depth),
        _ => rerank_full(&dist, queries, config),
    }
}

fn rerank_full(
    dist: &DistanceMatrix,
    queries: &[usize],
    config: &PipelineConfig,
) -> Result<RerankOutput> {
    let (graph, report) = transition_graph(dist, config)?;
    info!(
        "transition graph: {} edges, {} transport solves",
        graph.undirected_edge_count(),
        report.sinkhorn.solves
    );
    let rankings = par::map_indices(queries.len(), |qi| {
        let q = queries[qi];
        let d_prime = min_transition_cost(&graph, q);
        let candidates = euclidean_order(dist, q);
        to_ranking(q, blended_block(&candidates, &d_prime, config))
    });
    Ok(RerankOutput { rankings, report })
}

fn rerank_truncated(
    dist: &DistanceMatrix,
    queries: &[usize],
    config: &PipelineConfig,
    depth: usize,
) -> Result<RerankOutput> {
    let solved = par::map_indices(queries.len(), |qi| -> Result<(Ranking, RunReport)> {
        let q = queries[qi];
        let order = euclidean_order(dist, q);
        let (head, tail) = order.split_at(depth);
        let mut members = vec![q];
        members.extend(head.iter().map(|c| c.0));
        let local = dist.submatrix(&members);
        let (graph, report) = transition_graph(&local, config)?;
        let d_prime = min_transition_cost(&graph, 0);
        let candidates: Vec<(usize, f64)> =
            (1..members.len()).map(|l| (l, local.get(0, l))).collect();
        let block = blended_block(&candidates, &d_prime, config)
            .into_iter()
            .map(|(l, s)| (members[l], s));
        Ok((to_ranking(q, block.chain(tail.iter().copied())), report))
    });
    let mut rankings = Vec::with_capacity(queries.len());
    let mut report = RunReport::default();
    for r in solved {
        let (ranking, rep) = r?;
        rankings.push(ranking);
        report.absorb(rep);
    }
    Ok(RerankOutput { rankings, report })
}
