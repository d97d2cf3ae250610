//! Manifold re-ranking for instance retrieval.
//!
//! An initial Euclidean ranking is refined in three stages: similarity is
//! diffused over an ensemble of kNN affinity graphs whose combination
//! weights are learned jointly; each instance becomes a sparse probability
//! distribution over its mutual-neighbor region; and instances are compared
//! by the cheapest chain of local optimal-transport hops, blended with the
//! raw distance.

pub mod affinity;
pub mod bcd;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod lse;
pub mod matrix;
pub mod par;
pub mod pipeline;
pub mod tmt;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use geometry::{
    euclidean_distance_matrix, ground_cost, CostMatrix, DistanceMatrix, FeatureSet, RankedItem,
    Ranking,
};
pub use pipeline::{baseline_rankings, rerank, RerankOutput, RunReport};
