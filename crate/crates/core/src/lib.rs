//! Frank-Wolfe merging of fine-tuned checkpoint pools.
//!
//! The merged model is found by conditional-gradient optimization over the
//! convex hull of the pool's checkpoints: each iteration asks a linear
//! minimization oracle which checkpoint (or top-k checkpoints) the loss
//! gradient points toward, then merges toward it while staying in the hull.
//! Checkpoints are streamed one at a time, so memory does not grow with the
//! pool size.

pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod fw;
pub mod harness;
pub mod objective;
pub mod params;
pub mod pool;
pub mod simplex;
pub mod toy;

pub use error::{Error, Result};
pub use objective::{Objective, QuadraticObjective};
pub use params::{axpy, dot, dot_per_layer, ParamSet, Schema, Tensor};
pub use pool::CheckpointPool;
pub use simplex::{project_simplex, uniform_weights, SimplexMode, SimplexWeights};
