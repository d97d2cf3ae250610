//! Feature sets, Euclidean distances and ground costs.

use std::collections::HashSet;

use crate::error::{invalid, Error, Result};
use crate::matrix::DenseMatrix;
use crate::par;

/// `n x d` row-major feature matrix with one identifier per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    ids: Vec<String>,
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl FeatureSet {
    pub fn new(ids: Vec<String>, data: Vec<f64>, d: usize) -> Result<Self> {
        let n = ids.len();
        if n == 0 || d == 0 {
            return Err(Error::EmptyFeatures { n, d });
        }
        if data.len() != n * d {
            return Err(Error::IdCountMismatch {
                ids: n,
                rows: data.len() / d,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                row: pos / d,
                col: pos % d,
            });
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids, data, n, d })
    }

    /// Build from explicit rows, checking they all share one length.
    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if ids.len() != rows.len() {
            return Err(Error::IdCountMismatch {
                ids: ids.len(),
                rows: rows.len(),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::RaggedRow {
                    row,
                    got: r.len(),
                    expected: d,
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(ids, data, d)
    }

    /// Single-precision payloads are widened on ingestion.
    pub fn from_f32(ids: Vec<String>, data: &[f32], d: usize) -> Result<Self> {
        Self::new(ids, data.iter().map(|&v| f64::from(v)).collect(), d)
    }

    /// Ids `"0"`, `"1"`, ... for quick construction in tests and generators.
    pub fn with_index_ids(data: Vec<f64>, d: usize) -> Result<Self> {
        let n = data.len().checked_div(d).unwrap_or(0);
        Self::new((0..n).map(|i| i.to_string()).collect(), data, d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Copy with each row scaled to unit L2 norm (zero rows left as-is).
    pub fn l2_normalized(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.d) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Self {
            ids: self.ids.clone(),
            data,
            n: self.n,
            d: self.d,
        }
    }
}

/// Symmetric, zero-diagonal, nonnegative pairwise distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(DenseMatrix);

impl DistanceMatrix {
    pub const SYMMETRY_TOL: f64 = 1e-9;

    pub fn new(values: DenseMatrix) -> Result<Self> {
        if !values.is_square() || values.rows() == 0 {
            return Err(Error::Shape(format!(
                "distance matrix must be square and non-empty, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        let n = values.rows();
        for i in 0..n {
            if values.get(i, i) != 0.0 {
                return Err(invalid(
                    "distance",
                    format!("diagonal entry {i} is nonzero"),
                ));
            }
            for j in 0..n {
                let v = values.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(invalid(
                        "distance",
                        format!("entry ({i}, {j}) = {v} is negative or non-finite"),
                    ));
                }
                if (v - values.get(j, i)).abs() > Self::SYMMETRY_TOL {
                    return Err(invalid(
                        "distance",
                        format!("entries ({i}, {j}) and ({j}, {i}) differ"),
                    ));
                }
            }
        }
        Ok(Self(values))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }

    /// Distances restricted to `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let m = DenseMatrix::from_fn(indices.len(), indices.len(), |a, b| {
            self.get(indices[a], indices[b])
        });
        Self(m)
    }
}

/// Ground cost `C = d^gamma`, used by the transport solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(DenseMatrix);

impl CostMatrix {
    pub fn n(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }

    /// Wrap an arbitrary nonnegative square matrix, e.g. a hand-built test cost.
    pub fn from_matrix(values: DenseMatrix) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Shape("cost matrix must be square".into()));
        }
        if values.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("cost", "entries must be finite and nonnegative"));
        }
        Ok(Self(values))
    }
}

/// Pairwise Euclidean distances. The upper triangle is computed row-parallel
/// and mirrored, so the result is exactly symmetric.
pub fn euclidean_distance_matrix(features: &FeatureSet) -> DistanceMatrix {
    let n = features.n();
    let upper: Vec<Vec<f64>> = par::map_indices(n, |i| {
        let fi = features.row(i);
        (i + 1..n)
            .map(|j| {
                fi.iter()
                    .zip(features.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    });
    let mut m = DenseMatrix::zeros(n, n);
    for (i, row) in upper.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + 1 + offset;
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    DistanceMatrix(m)
}

pub fn ground_cost(dist: &DistanceMatrix, gamma: f64) -> Result<CostMatrix> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    let src = dist.as_matrix();
    let values = if gamma == 1.0 {
        src.clone()
    } else {
        let mut m = src.clone();
        m.as_mut_slice().iter_mut().for_each(|v| *v = v.powf(gamma));
        m
    };
    Ok(CostMatrix(values))
}

/// One gallery entry in a ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedItem {
    pub index: usize,
    pub score: f64,
}

/// Ordered gallery for one query, best (smallest distance) first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query: usize,
    pub items: Vec<RankedItem>,
}

impl Ranking {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|it| it.index)
    }

    pub fn scores_non_decreasing(&self) -> bool {
        self.items.windows(2).all(|w| w[0].score <= w[1].score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(rows: &[Vec<f64>]) -> FeatureSet {
        FeatureSet::from_rows((0..rows.len()).map(|i| format!("x{i}")).collect(), rows).unwrap()
    }

    #[test]
    fn identical_rows_have_zero_distance() {
        let d = euclidean_distance_matrix(&fs(&[vec![1.5, -2.0], vec![1.5, -2.0]]));
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn pythagorean_triple() {
        let d = euclidean_distance_matrix(&fs(&[vec![0.0, 0.0], vec![3.0, 4.0]]));
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
    }

    #[test]
    fn non_finite_feature_names_row() {
        let err = FeatureSet::from_rows(
            vec!["a".into(), "b".into()],
            &[vec![0.0, 1.0], vec![f64::NAN, 1.0]],
        )
        .unwrap_err();
        assert_eq!(err, Error::NonFiniteFeature { row: 1, col: 0 });
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = FeatureSet::new(vec!["a".into(), "a".into()], vec![0.0, 1.0], 1).unwrap_err();
        assert_eq!(err, Error::DuplicateId("a".into()));
    }

    #[test]
    fn ground_cost_identity_and_square() {
        let d = euclidean_distance_matrix(&fs(&[vec![0.0], vec![2.0]]));
        assert_eq!(ground_cost(&d, 1.0).unwrap().as_matrix(), d.as_matrix());
        assert_eq!(ground_cost(&d, 2.0).unwrap().get(0, 1), 4.0);
        assert!(ground_cost(&d, 0.0).is_err());
        assert!(ground_cost(&d, -1.0).is_err());
    }

    #[test]
    fn l2_normalization_leaves_zero_rows() {
        let f = fs(&[vec![3.0, 4.0], vec![0.0, 0.0]]).l2_normalized();
        assert_eq!(f.row(0), &[0.6, 0.8]);
        assert_eq!(f.row(1), &[0.0, 0.0]);
    }
}
