//! Linear minimization oracles over the pool's vertices.

use indexmap::IndexMap;

use super::config::LmoGranularity;
use crate::error::{Error, Result};
use crate::params::{dot, dot_per_layer, ParamSet};
use crate::pool::CheckpointPool;

/// Linear scores `<grad, vertex>` of every pool entry, whole-model and per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub ids: Vec<String>,
    pub total: Vec<f64>,
    pub per_layer: Vec<IndexMap<String, f64>>,
}

/// What an oracle picked: one vertex, or one vertex per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Vertex(usize),
    PerLayer(IndexMap<String, usize>),
}

impl Selection {
    /// The vertex used for `layer`.
    pub fn vertex_for(&self, layer: &str) -> usize {
        match self {
            Selection::Vertex(i) => *i,
            Selection::PerLayer(m) => m[layer],
        }
    }
}

/// Score every vertex against `grad`, loading one checkpoint at a time.
pub fn score_pool(pool: &CheckpointPool, grad: &ParamSet) -> Result<ScoreTable> {
    let mut table = ScoreTable {
        ids: Vec::with_capacity(pool.len()),
        total: Vec::with_capacity(pool.len()),
        per_layer: Vec::with_capacity(pool.len()),
    };
    for i in 0..pool.len() {
        let vertex = pool.load(i)?;
        let total = dot(grad, &vertex).map_err(|e| tag(e, pool.id(i)))?;
        let layers = dot_per_layer(grad, &vertex)?;
        drop(vertex);
        table.ids.push(pool.id(i).to_string());
        table.total.push(total);
        table.per_layer.push(layers);
    }
    Ok(table)
}

fn tag(e: Error, id: &str) -> Error {
    match e {
        Error::Schema(m) => Error::Schema(format!("pool entry `{id}`: {m}")),
        other => other,
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if i == 0 || v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Indices of the `k` smallest values, ascending, lower index first on ties.
fn smallest_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order.truncate(k);
    order
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn layer_names(&self) -> Vec<String> {
        self.per_layer
            .first()
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }

    fn layer_column(&self, layer: &str) -> Vec<f64> {
        self.per_layer.iter().map(|m| m[layer]).collect()
    }

    /// Hard LMO: the minimizing vertex (per layer for layer-wise).
    pub fn hard(&self, granularity: LmoGranularity) -> Selection {
        match granularity {
            LmoGranularity::Task => Selection::Vertex(argmin(self.total.iter().copied())),
            LmoGranularity::Layer => Selection::PerLayer(
                self.layer_names()
                    .into_iter()
                    .map(|l| {
                        let i = argmin(self.per_layer.iter().map(|m| m[&l]));
                        (l, i)
                    })
                    .collect(),
            ),
        }
    }

    /// Soft LMO: the `k` best selections, best first.
    pub fn topk(&self, k: usize, granularity: LmoGranularity) -> Result<Vec<Selection>> {
        if k == 0 || k > self.len() {
            return Err(Error::Config(format!("top-k with k = {k} over {} vertices", self.len())));
        }
        Ok(match granularity {
            LmoGranularity::Task => smallest_k(&self.total, k).into_iter().map(Selection::Vertex).collect(),
            LmoGranularity::Layer => {
                let per_layer: Vec<(String, Vec<usize>)> = self
                    .layer_names()
                    .into_iter()
                    .map(|l| {
                        let order = smallest_k(&self.layer_column(&l), k);
                        (l, order)
                    })
                    .collect();
                (0..k)
                    .map(|j| {
                        Selection::PerLayer(per_layer.iter().map(|(l, o)| (l.clone(), o[j])).collect())
                    })
                    .collect()
            }
        })
    }
}

/// `<grad, vertex>` for every vertex, in pool order.
pub fn linear_scores(pool: &CheckpointPool, grad: &ParamSet) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::with_capacity(pool.len());
    for i in 0..pool.len() {
        let vertex = pool.load(i)?;
        out.push((pool.id(i).to_string(), dot(grad, &vertex).map_err(|e| tag(e, pool.id(i)))?));
    }
    Ok(out)
}

/// Per-layer `<grad_l, vertex_l>` for every vertex, in pool order.
pub fn layer_scores(
    pool: &CheckpointPool,
    grad: &ParamSet,
) -> Result<Vec<(String, IndexMap<String, f64>)>> {
    let mut out = Vec::with_capacity(pool.len());
    for i in 0..pool.len() {
        let vertex = pool.load(i)?;
        out.push((
            pool.id(i).to_string(),
            dot_per_layer(grad, &vertex).map_err(|e| tag(e, pool.id(i)))?,
        ));
    }
    Ok(out)
}

pub fn lmo_hard(pool: &CheckpointPool, grad: &ParamSet, granularity: LmoGranularity) -> Result<Selection> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(score_pool(pool, grad)?.hard(granularity))
}

pub fn lmo_topk(
    pool: &CheckpointPool,
    grad: &ParamSet,
    k: usize,
    granularity: LmoGranularity,
) -> Result<Vec<Selection>> {
    if k > pool.len() {
        return Err(Error::Config(format!("k = {k} exceeds pool size {}", pool.len())));
    }
    score_pool(pool, grad)?.topk(k, granularity)
}
