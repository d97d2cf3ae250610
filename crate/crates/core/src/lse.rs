//! Locality state embedding: sparse per-instance probability distributions
//! over the nodes, supported on k-reciprocal regions.

use crate::affinity::{Neighbors, ReciprocalSets};
use crate::bcd::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::par;

/// Sparse probability vector over node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    support: Vec<usize>,
    mass: Vec<f64>,
}

impl StateDistribution {
    pub const SUM_TOL: f64 = 1e-10;

    /// Validate and build from `(node, mass)` pairs. Zero masses are dropped.
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.retain(|&(_, m)| m != 0.0);
        entries.sort_by_key(|&(i, _)| i);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidDistribution("duplicate support node".into()));
        }
        if entries.iter().any(|&(_, m)| !(m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidDistribution(
                "masses must be positive and finite".into(),
            ));
        }
        let sum: f64 = entries.iter().map(|&(_, m)| m).sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidDistribution(format!("masses sum to {sum}")));
        }
        let (support, mass) = entries.into_iter().unzip();
        Ok(Self { support, mass })
    }

    pub fn point_mass(node: usize) -> Self {
        Self {
            support: vec![node],
            mass: vec![1.0],
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn get(&self, node: usize) -> f64 {
        match self.support.binary_search(&node) {
            Ok(p) => self.mass[p],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().copied().zip(self.mass.iter().copied())
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for (i, m) in self.iter() {
            v[i] = m;
        }
        v
    }
}

/// One distribution per instance, plus the parameters that produced them.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub distributions: Vec<StateDistribution>,
    pub k1: usize,
    pub k2: usize,
    pub kappa: f64,
}

/// Row-normalize `F` over each instance's reciprocal region. Negative
/// similarities (round-off) are clamped to zero first.
pub fn embed(f: &SimilarityMatrix, regions: &ReciprocalSets) -> Result<Vec<StateDistribution>> {
    let n = regions.n();
    if f.rows() != n || f.cols() != n {
        return Err(Error::Shape(format!(
            "similarity is {}x{}, regions cover {n} instances",
            f.rows(),
            f.cols()
        )));
    }
    let rows = par::map_indices(n, |i| {
        let row = f.row(i);
        let region = regions.of(i);
        let total: f64 = region.iter().map(|&j| row[j].max(0.0)).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::EmptyRegion { instance: i });
        }
        let (support, mass): (Vec<usize>, Vec<f64>) = region
            .iter()
            .filter_map(|&j| {
                let v = row[j].max(0.0);
                (v > 0.0).then_some((j, v / total))
            })
            .unzip();
        Ok(StateDistribution { support, mass })
    });
    rows.into_iter().collect()
}

/// Average the embeddings of each instance's `k2` nearest neighbors, giving
/// reciprocal neighbors weight `kappa + 1` and the others weight 1.
pub fn aggregate(
    base: &[StateDistribution],
    neighbors: &Neighbors,
    reciprocal: &ReciprocalSets,
    kappa: f64,
) -> Result<Vec<StateDistribution>> {
    let n = base.len();
    if neighbors.n() != n || reciprocal.n() != n {
        return Err(Error::Shape(
            "neighbor structures do not cover every instance".into(),
        ));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(crate::error::invalid("kappa", "must be nonnegative"));
    }
    let out = par::map_indices(n, |i| {
        let nb = neighbors.of(i);
        let r_count = nb.iter().filter(|&&j| reciprocal.contains(i, j)).count();
        let denom = kappa * r_count as f64 + nb.len() as f64;
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for &j in nb {
            let w = if reciprocal.contains(i, j) {
                kappa + 1.0
            } else {
                1.0
            } / denom;
            acc.extend(base[j].iter().map(|(node, m)| (node, w * m)));
        }
        acc.sort_by_key(|&(node, _)| node);
        let mut support = Vec::with_capacity(acc.len());
        let mut mass: Vec<f64> = Vec::with_capacity(acc.len());
        for (node, m) in acc {
            if support.last() == Some(&node) {
                *mass.last_mut().unwrap() += m;
            } else {
                support.push(node);
                mass.push(m);
            }
        }
        StateDistribution { support, mass }
    });
    Ok(out)
}

/// Full embedding from diffused similarity and neighbor structures.
pub fn embed_all(
    f: &SimilarityMatrix,
    regions_k1: &ReciprocalSets,
    neighbors_k2: &Neighbors,
    reciprocal_k2: &ReciprocalSets,
    kappa: f64,
) -> Result<EmbeddingSet> {
    let base = embed(f, regions_k1)?;
    let distributions = aggregate(&base, neighbors_k2, reciprocal_k2, kappa)?;
    Ok(EmbeddingSet {
        distributions,
        k1: regions_k1.k(),
        k2: neighbors_k2.k(),
        kappa,
    })
}
