//! Frank-Wolfe merging over the convex hull of a checkpoint pool.
//!
//! The hard variant follows the classic loop: score every vertex against the
//! current gradient, pick the minimizer, test the FW gap, line-search a step
//! and merge. The soft variant keeps the top-k vertices and solves for their
//! simplex-constrained merging weights by projected gradient descent.

mod config;
mod engine;
mod hull;
mod lmo;
mod steps;
mod trace;

pub use config::{FWConfig, LambdaGranularity, LmoGranularity, MergeFnKind, Variant};
pub use engine::{read_trace, run_fw, run_fw_with, FWResult, MergeFn, StopReason};
pub use hull::{reconstruct, BarycentricCoords, HullCoords};
pub use lmo::{layer_scores, linear_scores, lmo_hard, lmo_topk, score_pool, ScoreTable, Selection};
pub use steps::{
    fw_gap, inner_optimize_lambda, line_search, merge_convex, merge_soft, soft_combination,
    LambdaSolution, LambdaWeights,
};
pub use trace::{IterationRecord, LambdaRecord, TraceHeader, VertexScore};
