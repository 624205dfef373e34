//! Data-free reference mergers: weight averaging, task arithmetic and a
//! TIES-style trim / elect-sign / disjoint-mean merge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fw::MergeFn;
use crate::params::ParamSet;
use crate::pool::CheckpointPool;

/// Element-wise mean of all checkpoints, streamed one at a time.
pub fn weight_average(pool: &CheckpointPool) -> Result<ParamSet> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut acc = pool.load(0)?.into_params();
    for i in 1..pool.len() {
        acc.axpy_inplace(1.0, &*pool.load(i)?)?;
    }
    acc.scale(1.0 / pool.len() as f64)
}

/// `base + lambda * sum_i (theta_i - base)`, streamed one checkpoint at a time.
pub fn task_arithmetic(base: &ParamSet, pool: &CheckpointPool, lambda: f64) -> Result<ParamSet> {
    let mut out = base.clone();
    for i in 0..pool.len() {
        let ckpt = pool.load(i)?;
        let tau = ckpt.sub(base)?;
        out.axpy_inplace(lambda, &tau)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiesConfig {
    /// Fraction of largest-magnitude task-vector entries kept, in `(0, 1]`.
    pub density: f64,
    /// Scale applied to the merged task vector.
    pub lambda: f64,
}

impl Default for TiesConfig {
    fn default() -> Self {
        TiesConfig {
            density: 0.2,
            lambda: 1.0,
        }
    }
}

impl TiesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!("TIES density {} outside (0, 1]", self.density)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("TIES lambda {} must be positive", self.lambda)));
        }
        Ok(())
    }
}

/// Zero all but the `ceil(density * len)` largest-magnitude entries.
/// Equal magnitudes keep the lower flat index.
fn trim(values: &mut [f64], density: f64) {
    let keep = ((density * values.len() as f64).ceil() as usize).clamp(1, values.len());
    if keep == values.len() {
        return;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    for &i in &order[keep..] {
        values[i] = 0.0;
    }
}

fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

/// Combine flat task vectors: elect the sign carrying more total magnitude
/// (positive on ties), then reduce the entries agreeing with it. Sums run in
/// sorted order so the result does not depend on the order of `vectors`.
fn elect_and_reduce(vectors: &[Vec<f64>], mean: bool) -> Vec<f64> {
    let dim = vectors.first().map_or(0, Vec::len);
    (0..dim)
        .map(|j| {
            let column: Vec<f64> = vectors.iter().map(|v| v[j]).collect();
            let pos: Vec<f64> = column.iter().copied().filter(|&x| x > 0.0).collect();
            let neg: Vec<f64> = column.iter().copied().filter(|&x| x < 0.0).collect();
            let pos_mass = sorted_sum(pos.clone());
            let neg_mass = sorted_sum(neg.iter().map(|x| -x).collect());
            let agreeing = if pos_mass >= neg_mass { pos } else { neg };
            if agreeing.is_empty() {
                return 0.0;
            }
            let n = agreeing.len() as f64;
            let total = sorted_sum(agreeing);
            if mean {
                total / n
            } else {
                total
            }
        })
        .collect()
}

fn unflatten(like: &ParamSet, flat: &[f64]) -> ParamSet {
    let mut out = like.zeros_like();
    let mut offset = 0;
    for (_, t) in out.iter_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    out
}

/// TIES-style merge of the pool's task vectors relative to `base`.
///
/// Holds every task vector at once, so residency grows with the pool.
pub fn ties_merge(base: &ParamSet, pool: &CheckpointPool, cfg: &TiesConfig) -> Result<ParamSet> {
    cfg.validate()?;
    let checkouts = (0..pool.len()).map(|i| pool.load(i)).collect::<Result<Vec<_>>>()?;
    let mut vectors = Vec::with_capacity(checkouts.len());
    for c in &checkouts {
        let mut tau = c.sub(base)?.flatten();
        trim(&mut tau, cfg.density);
        vectors.push(tau);
    }
    let merged = elect_and_reduce(&vectors, true);
    drop(checkouts);
    let mut out = base.clone();
    out.axpy_inplace(cfg.lambda, &unflatten(base, &merged))?;
    Ok(out)
}

/// TIES-style merge function for the Frank-Wolfe loop: weighted task vectors
/// `w_j (v_j - theta)` are trimmed, sign-elected and summed over agreeing
/// entries. With density 1 and no sign conflicts it equals the convex update.
#[derive(Debug, Clone)]
pub struct TiesMergeFn {
    density: f64,
}

impl TiesMergeFn {
    pub fn new(density: f64) -> Result<Self> {
        TiesConfig { density, lambda: 1.0 }.validate()?;
        Ok(TiesMergeFn { density })
    }
}

impl MergeFn for TiesMergeFn {
    fn name(&self) -> &str {
        "ties"
    }

    fn merge(&self, theta: &ParamSet, vertices: &[&ParamSet], weights: &[f64]) -> Result<ParamSet> {
        if vertices.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} vertices for {} weights",
                vertices.len(),
                weights.len()
            )));
        }
        let mut vectors = Vec::with_capacity(vertices.len());
        for (v, &w) in vertices.iter().zip(weights) {
            let mut tau = v.sub(theta)?.scale(w)?.flatten();
            trim(&mut tau, self.density);
            vectors.push(tau);
        }
        let merged = elect_and_reduce(&vectors, false);
        let mut out = theta.clone();
        out.axpy_inplace(1.0, &unflatten(theta, &merged))?;
        Ok(out)
    }
}
