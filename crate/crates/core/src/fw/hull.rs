//! Barycentric bookkeeping: the merged model written as a convex combination
//! of pool vertices, the witness that it never left the hull.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::pool::CheckpointPool;

/// Vertex id to weight.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BarycentricCoords {
    pub weights: IndexMap<String, f64>,
}

impl BarycentricCoords {
    pub fn vertex(id: &str) -> Self {
        let mut weights = IndexMap::new();
        weights.insert(id.to_string(), 1.0);
        BarycentricCoords { weights }
    }

    pub fn sum(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn min(&self) -> f64 {
        self.weights.values().copied().fold(f64::INFINITY, f64::min)
    }

    /// `keep * self + sum_j w_j e_{id_j}`.
    fn blend(&mut self, keep: f64, picks: &[(&str, f64)]) {
        for w in self.weights.values_mut() {
            *w *= keep;
        }
        for &(id, w) in picks {
            *self.weights.entry(id.to_string()).or_insert(0.0) += w;
        }
    }

    /// Nonnegative within `tol` and summing to one within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.min() >= -tol && (self.sum() - 1.0).abs() <= tol
    }
}

/// Coordinates of the whole model, or of each layer when layers have been
/// merged toward different vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullCoords {
    Shared(BarycentricCoords),
    PerLayer(IndexMap<String, BarycentricCoords>),
}

impl HullCoords {
    pub fn vertex(id: &str) -> Self {
        HullCoords::Shared(BarycentricCoords::vertex(id))
    }

    /// The coordinates of `layer`.
    pub fn for_layer(&self, layer: &str) -> &BarycentricCoords {
        match self {
            HullCoords::Shared(c) => c,
            HullCoords::PerLayer(m) => &m[layer],
        }
    }

    /// Every coordinate map with its layer name (`None` when shared).
    pub fn all(&self) -> Vec<(Option<&str>, &BarycentricCoords)> {
        match self {
            HullCoords::Shared(c) => vec![(None, c)],
            HullCoords::PerLayer(m) => m.iter().map(|(l, c)| (Some(l.as_str()), c)).collect(),
        }
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.all().iter().all(|(_, c)| c.is_valid(tol))
    }

    /// Apply the same update to every layer.
    pub fn blend_shared(&mut self, keep: f64, picks: &[(&str, f64)]) {
        match self {
            HullCoords::Shared(c) => c.blend(keep, picks),
            HullCoords::PerLayer(m) => m.values_mut().for_each(|c| c.blend(keep, picks)),
        }
    }

    /// Apply a layer-specific update; `update(layer)` yields `(keep, picks)`.
    pub fn blend_layers<'a>(
        &mut self,
        layers: impl IntoIterator<Item = &'a str>,
        mut update: impl FnMut(&str) -> (f64, Vec<(String, f64)>),
    ) {
        let layers: Vec<&str> = layers.into_iter().collect();
        if let HullCoords::Shared(c) = self {
            let c = std::mem::take(c);
            *self = HullCoords::PerLayer(layers.iter().map(|l| (l.to_string(), c.clone())).collect());
        }
        if let HullCoords::PerLayer(m) = self {
            for l in layers {
                let (keep, picks) = update(l);
                let picks: Vec<(&str, f64)> = picks.iter().map(|(id, w)| (id.as_str(), *w)).collect();
                m.get_mut(l).expect("layer present").blend(keep, &picks);
            }
        }
    }
}

/// Rebuild the model from its coordinates, streaming each vertex once.
pub fn reconstruct(coords: &HullCoords, pool: &CheckpointPool, like: &ParamSet) -> Result<ParamSet> {
    let mut out = like.zeros_like();
    let mut ids: Vec<&str> = Vec::new();
    for (_, c) in coords.all() {
        for id in c.weights.keys() {
            if !ids.contains(&id.as_str()) {
                ids.push(id);
            }
        }
    }
    for id in ids {
        let index = pool
            .index_of(id)
            .ok_or_else(|| Error::Config(format!("coordinate for unknown vertex `{id}`")))?;
        let vertex = pool.load(index)?;
        like.check_same_schema(&vertex)?;
        for (name, o) in out.iter_mut() {
            let w = coords.for_layer(name).weights.get(id).copied().unwrap_or(0.0);
            if w == 0.0 {
                continue;
            }
            for (ov, vv) in o.data_mut().iter_mut().zip(vertex.layer(name).unwrap().data()) {
                *ov += w * vv;
            }
        }
    }
    Ok(out)
}
