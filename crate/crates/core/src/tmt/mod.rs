//! Multi-hop transport distance between state distributions, blended with
//! the raw Euclidean distance.

mod exact;
mod graph;
mod sinkhorn;

pub use exact::{exact_w1, EXACT_SUPPORT_LIMIT};
pub use graph::{
    all_pairs_transition_cost, build_transition_graph, hop_lists, min_transition_cost, EdgeStats,
    TransitionGraph,
};
pub use sinkhorn::{
    round_to_marginals, sinkhorn_w1, sinkhorn_w1_excess, SinkhornOutcome, SinkhornParams,
    TransportPlan, TransportSolver,
};

use crate::error::{invalid, Error, Result};
use crate::geometry::{CostMatrix, DistanceMatrix};
use crate::lse::StateDistribution;
use crate::matrix::DenseMatrix;

/// Fraction of the median observed ground cost used as the default `epsilon`.
pub const EPSILON_FRACTION: f64 = 0.05;

/// `theta * d + (1 - theta) * d'`, with `+inf` wherever `d'` is unreachable
/// and `theta < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendedDistance {
    pub d_star: DenseMatrix,
    pub theta: f64,
}

impl BlendedDistance {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d_star.get(i, j)
    }
}

pub fn blend(d: f64, d_prime: f64, theta: f64) -> f64 {
    if theta == 1.0 {
        d
    } else if theta == 0.0 || d_prime.is_infinite() {
        d_prime
    } else {
        theta * d + (1.0 - theta) * d_prime
    }
}

pub fn fuse(d: &DistanceMatrix, d_prime: &DenseMatrix, theta: f64) -> Result<BlendedDistance> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(invalid("theta", format!("must lie in [0, 1], got {theta}")));
    }
    let n = d.n();
    if d_prime.rows() != n || d_prime.cols() != n {
        return Err(Error::Shape(format!(
            "d' is {}x{}, d is {n}x{n}",
            d_prime.rows(),
            d_prime.cols()
        )));
    }
    let d_star = DenseMatrix::from_fn(n, n, |i, j| blend(d.get(i, j), d_prime.get(i, j), theta));
    Ok(BlendedDistance { d_star, theta })
}

/// `EPSILON_FRACTION` times the median positive ground cost between each
/// node and the support of its own distribution. Falls back to the median
/// positive entry of the whole cost matrix when that set is empty.
pub fn default_epsilon(embeddings: &[StateDistribution], cost: &CostMatrix) -> f64 {
    let mut values: Vec<f64> = embeddings
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.support().iter().map(move |&j| cost.get(i, j)))
        .filter(|&c| c > 0.0)
        .collect();
    if values.is_empty() {
        values = cost
            .as_matrix()
            .as_slice()
            .iter()
            .copied()
            .filter(|&c| c > 0.0)
            .collect();
    }
    if values.is_empty() {
        return 1.0;
    }
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    EPSILON_FRACTION * *m
}
