//! k-NN affinity graphs, their normalization, multi-scale ensembles and
//! k-reciprocal neighborhoods.
//!
//! Conventions:
//! * neighbor lists always start with the instance itself, followed by the
//!   other instances in ascending `(distance, index)` order;
//! * the self entry carries weight `exp(0) = 1` in the affinity matrix
//!   (see [`SELF_LOOPS`]), which keeps every degree strictly positive;
//! * graphs used for diffusion are symmetrized with `max(W, W^T)` before
//!   normalization, so `S` is symmetric and its spectral radius is at most 1.

use std::cmp::Ordering;

use log::warn;

use crate::config::SigmaStrategy;
use crate::error::{invalid, Error, Result};
use crate::geometry::DistanceMatrix;
use crate::matrix::CsrMatrix;
use crate::par;

/// Whether an instance is connected to itself in the affinity graph.
pub const SELF_LOOPS: bool = true;

/// Per-instance nearest-neighbor lists, each of length `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbors {
    k: usize,
    lists: Vec<Vec<usize>>,
}

impl Neighbors {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.lists.len()
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    /// The first `k` entries of every list.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k > self.k {
            return Err(invalid(
                "k",
                format!("cannot extend {}-NN lists to {k}", self.k),
            ));
        }
        Ok(Self {
            k,
            lists: self.lists.iter().map(|l| l[..k].to_vec()).collect(),
        })
    }

    fn contains(&self, i: usize, j: usize) -> bool {
        self.lists[i].contains(&j)
    }
}

/// `k` nearest neighbors of every instance, self first, ties broken by index.
pub fn knn_sets(dist: &DistanceMatrix, k: usize) -> Result<Neighbors> {
    let n = dist.n();
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if k > n {
        return Err(Error::NeighborCountTooLarge { k, n });
    }
    let lists = par::map_indices(n, |i| {
        let row = dist.row(i);
        let cmp = |a: &usize, b: &usize| -> Ordering { row[*a].total_cmp(&row[*b]).then(a.cmp(b)) };
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let take = k - 1;
        if take > 0 && take < others.len() {
            others.select_nth_unstable_by(take - 1, cmp);
            others.truncate(take);
        } else {
            others.truncate(take);
        }
        others.sort_unstable_by(cmp);
        let mut list = Vec::with_capacity(k);
        list.push(i);
        list.extend(others);
        list
    });
    Ok(Neighbors { k, lists })
}

/// Resolve the kernel bandwidth for reference neighbor count `k`.
pub fn resolve_sigma(dist: &DistanceMatrix, k: usize, strategy: SigmaStrategy) -> Result<f64> {
    let sigma = match strategy {
        SigmaStrategy::Fixed(s) => s,
        SigmaStrategy::GlobalMeanKnn => {
            let n = dist.n();
            // position ceil(k/2) in a self-first list is the ceil(k/2)-th other neighbor
            let pos = k.div_ceil(2).min(n - 1);
            if pos == 0 {
                return Err(invalid(
                    "sigma",
                    "a single instance has no neighbor distance",
                ));
            }
            let nb = knn_sets(dist, pos + 1)?;
            (0..n).map(|i| dist.get(i, nb.of(i)[pos])).sum::<f64>() / n as f64
        }
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(
            "sigma",
            format!("bandwidth must be positive, got {sigma}"),
        ));
    }
    Ok(sigma)
}

/// Gaussian-weighted k-NN adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    pub w: CsrMatrix,
    pub k: usize,
    pub sigma: f64,
}

pub fn build_affinity(
    dist: &DistanceMatrix,
    k: usize,
    sigma: SigmaStrategy,
) -> Result<AffinityGraph> {
    let sigma = resolve_sigma(dist, k, sigma)?;
    let nb = knn_sets(dist, k)?;
    affinity_from_neighbors(dist, &nb, sigma)
}

pub fn affinity_from_neighbors(
    dist: &DistanceMatrix,
    nb: &Neighbors,
    sigma: f64,
) -> Result<AffinityGraph> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(
            "sigma",
            format!("bandwidth must be positive, got {sigma}"),
        ));
    }
    let s2 = sigma * sigma;
    let rows = (0..nb.n())
        .map(|i| {
            nb.of(i)
                .iter()
                .filter(|&&j| SELF_LOOPS || j != i)
                .map(|&j| {
                    let d = dist.get(i, j);
                    (j, (-d * d / s2).exp())
                })
                // far neighbors can underflow to zero; keep the pattern meaningful
                .filter(|&(_, w)| w > 0.0)
                .collect()
        })
        .collect();
    Ok(AffinityGraph {
        w: CsrMatrix::from_rows(nb.n(), rows)?,
        k: nb.k(),
        sigma,
    })
}

impl AffinityGraph {
    /// `max(W, W^T)`: keep an edge if either endpoint lists the other.
    pub fn symmetrized(&self) -> Self {
        let t = self.w.transpose();
        let rows = (0..self.w.n_rows())
            .map(|i| {
                let mut row: Vec<(usize, f64)> = self.w.row(i).collect();
                for (j, v) in t.row(i) {
                    match row.iter_mut().find(|(c, _)| *c == j) {
                        Some(slot) => slot.1 = slot.1.max(v),
                        None => row.push((j, v)),
                    }
                }
                row
            })
            .collect();
        Self {
            w: CsrMatrix::from_rows(self.w.n_cols(), rows).expect("same shape"),
            k: self.k,
            sigma: self.sigma,
        }
    }
}

/// `S = D^{-1/2} W D^{-1/2}` together with `S_bar = (S + S^T) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGraph {
    pub w: CsrMatrix,
    pub s: CsrMatrix,
    pub s_bar: CsrMatrix,
    /// Row sums of `W`.
    pub degree: Vec<f64>,
}

pub fn normalize(graph: &AffinityGraph) -> Result<NormalizedGraph> {
    normalize_weights(&graph.w)
}

pub fn normalize_weights(w: &CsrMatrix) -> Result<NormalizedGraph> {
    if w.n_rows() != w.n_cols() {
        return Err(Error::Shape("affinity matrix must be square".into()));
    }
    let degree = w.row_sums();
    if let Some(node) = degree.iter().position(|&d| d.is_nan() || d <= 0.0) {
        return Err(Error::IsolatedNode { node });
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let rows = (0..w.n_rows())
        .map(|i| {
            w.row(i)
                .map(|(j, v)| (j, v * (inv_sqrt[i] * inv_sqrt[j])))
                .collect()
        })
        .collect();
    let s = CsrMatrix::from_rows(w.n_cols(), rows)?;
    let s_bar = if s.is_exactly_symmetric() {
        s.clone()
    } else {
        s.add_scaled(&s.transpose(), 0.5)?
    };
    Ok(NormalizedGraph {
        w: w.clone(),
        s,
        s_bar,
        degree,
    })
}

/// Graphs over the same nodes at increasing connectivity levels.
#[derive(Debug, Clone)]
pub struct GraphEnsemble {
    pub graphs: Vec<NormalizedGraph>,
    pub ks: Vec<usize>,
    /// Index of the graph built with the unscaled reference `k`, if present.
    pub reference: usize,
    pub sigma: f64,
}

impl GraphEnsemble {
    pub fn m(&self) -> usize {
        self.graphs.len()
    }

    pub fn n(&self) -> usize {
        self.graphs[0].s.n_rows()
    }

    pub fn from_graphs(graphs: Vec<NormalizedGraph>, ks: Vec<usize>) -> Result<Self> {
        if graphs.is_empty() || graphs.len() != ks.len() {
            return Err(invalid(
                "ensemble",
                "need one neighbor count per graph and at least one graph",
            ));
        }
        let n = graphs[0].s.n_rows();
        if graphs.iter().any(|g| g.s.n_rows() != n) {
            return Err(Error::Shape("ensemble graphs differ in node count".into()));
        }
        Ok(Self {
            graphs,
            ks,
            reference: 0,
            sigma: f64::NAN,
        })
    }
}

/// Distinct rounded neighbor counts `round(k * factor)`, ascending.
pub fn ensemble_ks(k: usize, factors: &[f64], n: usize) -> Result<Vec<usize>> {
    if factors.is_empty() {
        return Err(invalid("scale_factors", "need at least one factor"));
    }
    let mut ks = Vec::with_capacity(factors.len());
    for &f in factors {
        if !(f > 0.0 && f.is_finite()) {
            return Err(invalid(
                "scale_factors",
                format!("factor {f} is not positive"),
            ));
        }
        let kv = (k as f64 * f).round() as usize;
        if kv < 1 {
            return Err(invalid("scale_factors", format!("k * {f} rounds to zero")));
        }
        if kv > n {
            return Err(Error::NeighborCountTooLarge { k: kv, n });
        }
        ks.push(kv);
    }
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

/// Build one symmetrized, normalized graph per distinct scaled `k`. The
/// bandwidth is resolved once from the reference `k` and shared.
pub fn build_ensemble(
    dist: &DistanceMatrix,
    k: usize,
    factors: &[f64],
    sigma: SigmaStrategy,
) -> Result<GraphEnsemble> {
    let ks = ensemble_ks(k, factors, dist.n())?;
    let sigma = resolve_sigma(dist, k, sigma)?;
    let k_max = *ks.last().expect("non-empty");
    let full = knn_sets(dist, k_max)?;
    let graphs = ks
        .iter()
        .map(|&kv| {
            let g = affinity_from_neighbors(dist, &full.truncated(kv)?, sigma)?;
            normalize(&g.symmetrized())
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = ks
        .iter()
        .enumerate()
        .min_by_key(|(_, &kv)| kv.abs_diff(k))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(GraphEnsemble {
        graphs,
        ks,
        reference,
        sigma,
    })
}

/// Mutual-neighbor sets `R(i, k)`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReciprocalSets {
    k: usize,
    sets: Vec<Vec<usize>>,
}

impl ReciprocalSets {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.sets[i].binary_search(&j).is_ok()
    }
}

pub fn reciprocal_sets(neighbors: &Neighbors, k: usize) -> Result<ReciprocalSets> {
    let nb = if k == neighbors.k() {
        neighbors.clone()
    } else {
        neighbors.truncated(k)?
    };
    let sets = par::map_indices(nb.n(), |i| {
        let mut r: Vec<usize> = nb
            .of(i)
            .iter()
            .copied()
            .filter(|&j| nb.contains(j, i))
            .collect();
        r.sort_unstable();
        r
    });
    Ok(ReciprocalSets { k, sets })
}

/// Clamp a neighbor count to the instance count, warning when it shrinks.
pub fn clamp_to_n(name: &str, k: usize, n: usize) -> usize {
    if k > n {
        warn!("{name} = {k} exceeds the {n} available instances; clamping to {n}");
        n
    } else {
        k
    }
}
