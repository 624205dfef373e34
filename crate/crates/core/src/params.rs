//! Named-tensor parameter sets and the arithmetic the merge updates are built from.
//!
//! A [`ParamSet`] is an ordered map from layer name to a flat `f64` tensor. Layer
//! order is part of the schema: every reduction walks layers in that order and
//! then the flat index, so scores are bit-reproducible.

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A single named tensor: shape metadata plus row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!("shape {shape:?} has a zero extent")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Layer names and shapes, in storage order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema(pub Vec<(String, Vec<usize>)>);

impl Schema {
    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(n, _)| n.as_str())
    }

    pub fn total_dim(&self) -> usize {
        self.0.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Describe the first difference against `other`, or `None` when equal.
    pub fn diff(&self, other: &Schema) -> Option<String> {
        for (i, (name, shape)) in self.0.iter().enumerate() {
            match other.0.get(i) {
                None => return Some(format!("layer `{name}` missing")),
                Some((oname, _)) if oname != name => {
                    return Some(format!("layer {i} is `{oname}`, expected `{name}`"))
                }
                Some((_, oshape)) if oshape != shape => {
                    return Some(format!(
                        "layer `{name}` has shape {oshape:?}, expected {shape:?}"
                    ))
                }
                _ => {}
            }
        }
        if other.0.len() > self.0.len() {
            let (extra, _) = &other.0[self.0.len()];
            return Some(format!("unexpected layer `{extra}`"));
        }
        None
    }
}

/// An ordered collection of named tensors: one model's parameters, a gradient,
/// or a direction in parameter space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    layers: IndexMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Append a layer. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.layers.contains_key(&name) {
            return Err(Error::Schema(format!("duplicate layer `{name}`")));
        }
        self.layers.insert(name, tensor);
        Ok(())
    }

    /// Builder-style helper used heavily by tests and fixtures.
    pub fn from_layers<I, S>(layers: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<usize>, Vec<f64>)>,
        S: Into<String>,
    {
        let mut p = ParamSet::new();
        for (name, shape, data) in layers {
            p.insert(name, Tensor::new(shape, data)?)?;
        }
        Ok(p)
    }

    /// A single one-dimensional layer; handy for low-dimensional problems.
    ///
    /// Panics if `data` is empty.
    pub fn vector(name: &str, data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector layer must be non-empty");
        let mut p = ParamSet::new();
        p.layers
            .insert(name.to_string(), Tensor { shape: vec![data.len()], data });
        p
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| 0.0)
    }

    pub fn schema(&self) -> Schema {
        Schema(
            self.layers
                .iter()
                .map(|(n, t)| (n.clone(), t.shape.clone()))
                .collect(),
        )
    }

    pub fn total_dim(&self) -> usize {
        self.layers.values().map(Tensor::len).sum()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, name: &str) -> Option<&Tensor> {
        self.layers.get(name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.layers.get_mut(name)
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.layers.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.layers.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// All values concatenated in layer order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.values().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// Element `idx` of the flattened view.
    pub fn get_flat(&self, mut idx: usize) -> Option<f64> {
        for t in self.layers.values() {
            if idx < t.len() {
                return Some(t.data[idx]);
            }
            idx -= t.len();
        }
        None
    }

    pub fn set_flat(&mut self, mut idx: usize, value: f64) -> bool {
        for t in self.layers.values_mut() {
            if idx < t.len() {
                t.data[idx] = value;
                return true;
            }
            idx -= t.len();
        }
        false
    }

    pub fn is_finite(&self) -> bool {
        self.layers.values().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .values()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> Result<f64> {
        self.check_same_schema(other)?;
        Ok(self
            .layers
            .values()
            .zip(other.layers.values())
            .flat_map(|(a, b)| a.data.iter().zip(b.data.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    pub fn check_same_schema(&self, other: &ParamSet) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(other.layers.iter())
                .all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape == t2.shape);
        if same {
            Ok(())
        } else {
            let msg = self
                .schema()
                .diff(&other.schema())
                .unwrap_or_else(|| "schemas differ".to_string());
            Err(Error::Schema(msg))
        }
    }

    /// Element-wise map into a new set with the same schema.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ParamSet {
        let layers = self
            .layers
            .iter()
            .map(|(n, t)| {
                (
                    n.clone(),
                    Tensor {
                        shape: t.shape.clone(),
                        data: t.data.iter().map(|&v| f(v)).collect(),
                    },
                )
            })
            .collect();
        ParamSet { layers }
    }

    pub fn scale(&self, alpha: f64) -> Result<ParamSet> {
        let out = self.map(|v| alpha * v);
        ensure_finite(&out, "scale")?;
        Ok(out)
    }

    /// In-place `self += alpha * src`.
    pub fn axpy_inplace(&mut self, alpha: f64, src: &ParamSet) -> Result<()> {
        self.check_same_schema(src)?;
        for (dst, s) in self.layers.values_mut().zip(src.layers.values()) {
            for (d, &x) in dst.data.iter_mut().zip(s.data.iter()) {
                *d += alpha * x;
            }
        }
        ensure_finite(self, "axpy")
    }

    /// `self - other`.
    pub fn sub(&self, other: &ParamSet) -> Result<ParamSet> {
        axpy(self, -1.0, other)
    }

    /// SHA-256 over layer names, shapes and the bit patterns of every value.
    /// Two sets hash equal iff they are bit-identical.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, t) in &self.layers {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            h.update((t.shape.len() as u64).to_le_bytes());
            for &d in &t.shape {
                h.update((d as u64).to_le_bytes());
            }
            for v in &t.data {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

fn ensure_finite(p: &ParamSet, op: &str) -> Result<()> {
    for (name, t) in &p.layers {
        if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!(
                "{op} produced a non-finite value in layer `{name}` at index {i}"
            )));
        }
    }
    Ok(())
}

/// `dst + alpha * src`, leaving both inputs untouched.
pub fn axpy(dst: &ParamSet, alpha: f64, src: &ParamSet) -> Result<ParamSet> {
    let mut out = dst.clone();
    out.axpy_inplace(alpha, src)?;
    Ok(out)
}

/// Inner product over all layers. Summation runs layer by layer, then by flat
/// index, with no reassociation.
pub fn dot(a: &ParamSet, b: &ParamSet) -> Result<f64> {
    a.check_same_schema(b)?;
    let mut acc = 0.0;
    for (ta, tb) in a.layers.values().zip(b.layers.values()) {
        for (x, y) in ta.data.iter().zip(tb.data.iter()) {
            acc += x * y;
        }
    }
    Ok(acc)
}

/// Per-layer inner products, keyed in layer order.
pub fn dot_per_layer(a: &ParamSet, b: &ParamSet) -> Result<IndexMap<String, f64>> {
    a.check_same_schema(b)?;
    Ok(a.layers
        .iter()
        .zip(b.layers.values())
        .map(|((name, ta), tb)| {
            let mut acc = 0.0;
            for (x, y) in ta.data.iter().zip(tb.data.iter()) {
                acc += x * y;
            }
            (name.clone(), acc)
        })
        .collect())
}

/// `sum_i weights[i] * sets[i]`, accumulated in the given order.
pub fn linear_combination(sets: &[&ParamSet], weights: &[f64]) -> Result<ParamSet> {
    if sets.is_empty() || sets.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} sets for {} weights",
            sets.len(),
            weights.len()
        )));
    }
    let mut out = sets[0].zeros_like();
    for (s, &w) in sets.iter().zip(weights) {
        out.axpy_inplace(w, s)?;
    }
    Ok(out)
}
