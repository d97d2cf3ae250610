//! Retrieval metrics and a seeded synthetic manifold generator.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::geometry::{FeatureSet, Ranking};

/// Relevant and junk gallery ids for one query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryTruth {
    pub relevant: BTreeSet<String>,
    pub junk: BTreeSet<String>,
}

/// Per-query judgments keyed by query id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    queries: BTreeMap<String, QueryTruth>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add or replace the judgments for `query`. Fails if an id is both
    /// relevant and junk.
    pub fn insert(&mut self, query: impl Into<String>, truth: QueryTruth) -> Result<()> {
        let query = query.into();
        if let Some(id) = truth.relevant.intersection(&truth.junk).next() {
            return Err(invalid(
                "ground truth",
                format!("`{id}` is both relevant and junk for query `{query}`"),
            ));
        }
        self.queries.insert(query, truth);
        Ok(())
    }

    /// Every instance is a query; relevant items share its label.
    pub fn from_labels(ids: &[String], labels: &[usize]) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(Error::IdCountMismatch {
                ids: ids.len(),
                rows: labels.len(),
            });
        }
        let mut groups: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
        for (id, &l) in ids.iter().zip(labels) {
            groups.entry(l).or_default().push(id);
        }
        let mut truth = Self::new();
        for (id, l) in ids.iter().zip(labels) {
            let relevant = groups[l]
                .iter()
                .filter(|&&o| o != id)
                .map(|o| (*o).clone())
                .collect();
            truth.insert(
                id.clone(),
                QueryTruth {
                    relevant,
                    junk: BTreeSet::new(),
                },
            )?;
        }
        Ok(truth)
    }

    pub fn get(&self, query: &str) -> Option<&QueryTruth> {
        self.queries.get(query)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &QueryTruth)> {
        self.queries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Check that every referenced id belongs to `gallery`.
    pub fn check_ids(&self, gallery: &BTreeSet<&str>) -> Result<()> {
        for (q, t) in &self.queries {
            if let Some(bad) = t
                .relevant
                .iter()
                .chain(&t.junk)
                .find(|id| !gallery.contains(id.as_str()))
            {
                return Err(invalid(
                    "ground truth",
                    format!("query `{q}` references unknown id `{bad}`"),
                ));
            }
        }
        Ok(())
    }
}

fn scored<'a, S: AsRef<str> + 'a>(
    query: &'a str,
    ranked: &'a [S],
    truth: &'a QueryTruth,
) -> impl Iterator<Item = bool> + 'a {
    ranked
        .iter()
        .map(AsRef::as_ref)
        .filter(move |id| *id != query && !truth.junk.contains(*id))
        .map(move |id| truth.relevant.contains(id))
}

/// Average precision of `ranked` for `query`. Junk and the query itself are
/// removed before scoring. `None` when the query has no relevant items.
pub fn average_precision<S: AsRef<str>>(
    query: &str,
    ranked: &[S],
    truth: &QueryTruth,
) -> Option<f64> {
    let n_rel = truth
        .relevant
        .iter()
        .filter(|r| r.as_str() != query)
        .count();
    if n_rel == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, is_rel) in scored(query, ranked, truth).enumerate() {
        if is_rel {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Some(sum / n_rel as f64)
}

/// 1 if the first non-junk, non-self item is relevant.
pub fn recall_at_1<S: AsRef<str>>(query: &str, ranked: &[S], truth: &QueryTruth) -> Option<f64> {
    if truth.relevant.iter().all(|r| r == query) {
        return None;
    }
    Some(scored(query, ranked, truth).next().map_or(0.0, f64::from))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryScore {
    pub query: String,
    pub ap: f64,
    pub recall_at_1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub map: f64,
    pub recall_at_1: f64,
    pub per_query: Vec<QueryScore>,
    /// Queries left out because they have nothing relevant or no ranking.
    pub skipped: Vec<String>,
}

/// Score ranked id lists, one per query.
pub fn evaluate<S: AsRef<str>>(runs: &[(String, Vec<S>)], truth: &GroundTruth) -> MetricReport {
    let mut per_query = Vec::new();
    let mut skipped = Vec::new();
    for (q, ranked) in runs {
        let Some(t) = truth.get(q) else {
            warn!("query `{q}` has no ground truth; skipped");
            skipped.push(q.clone());
            continue;
        };
        match (average_precision(q, ranked, t), recall_at_1(q, ranked, t)) {
            (Some(ap), Some(r1)) => per_query.push(QueryScore {
                query: q.clone(),
                ap,
                recall_at_1: r1,
            }),
            _ => {
                warn!("query `{q}` has no relevant items; excluded from the mean");
                skipped.push(q.clone());
            }
        }
    }
    let count = per_query.len().max(1) as f64;
    MetricReport {
        map: per_query.iter().map(|s| s.ap).sum::<f64>() / count,
        recall_at_1: per_query.iter().map(|s| s.recall_at_1).sum::<f64>() / count,
        per_query,
        skipped,
    }
}

/// Score index rankings against the instance ids of `features`.
pub fn evaluate_rankings(
    rankings: &[Ranking],
    features: &FeatureSet,
    truth: &GroundTruth,
) -> MetricReport {
    let runs: Vec<(String, Vec<&str>)> = rankings
        .iter()
        .map(|r| {
            (
                features.id(r.query).to_string(),
                r.indices().map(|i| features.id(i)).collect(),
            )
        })
        .collect();
    evaluate(&runs, truth)
}

/// Synthetic data and labels from [`generate_manifold`].
#[derive(Debug, Clone)]
pub struct Manifold {
    pub features: FeatureSet,
    pub labels: Vec<usize>,
    pub truth: GroundTruth,
}

pub const DEFAULT_NOISE: f64 = 0.05;

/// Ratio between the radii of consecutive rings.
const RING_GROWTH: f64 = 3.5;

/// Concentric rings, one per cluster, each lying in its own tilted plane.
/// Ring `c` has radius `RING_GROWTH^c`, so outer rings are sparser and a
/// point's far side of its own ring is farther away than the neighboring
/// rings. Points are emitted cluster by cluster with ids `c{cluster}_{i}`.
pub fn generate_manifold(
    seed: u64,
    n_per_cluster: usize,
    clusters: usize,
    noise: f64,
) -> Result<Manifold> {
    if n_per_cluster == 0 || clusters == 0 {
        return Err(invalid(
            "generator",
            "needs at least one point and one cluster",
        ));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(invalid("noise", "must be nonnegative and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(n_per_cluster * clusters);
    let mut ids = Vec::with_capacity(rows.capacity());
    let mut labels = Vec::with_capacity(rows.capacity());
    for c in 0..clusters {
        let radius = RING_GROWTH.powi(c as i32);
        let tilt = 0.6 * c as f64;
        let (st, ct) = tilt.sin_cos();
        for i in 0..n_per_cluster {
            let angle = 2.0 * PI * (i as f64 + rng.random::<f64>()) / n_per_cluster as f64;
            let (x, y) = (radius * angle.cos(), radius * angle.sin());
            // rotate the ring plane about the x axis, then jitter
            let jitter = noise * radius;
            rows.push(vec![
                x + jitter * gauss.sample(&mut rng),
                y * ct + jitter * gauss.sample(&mut rng),
                y * st + jitter * gauss.sample(&mut rng),
            ]);
            ids.push(format!("c{c}_{i}"));
            labels.push(c);
        }
    }
    let features = FeatureSet::from_rows(ids, &rows)?;
    let truth = GroundTruth::from_labels(features.ids(), &labels)?;
    Ok(Manifold {
        features,
        labels,
        truth,
    })
}
