//! Per-iteration trace records and their JSON-lines form.
//!
//! A trace file holds one header line (`"kind": "header"`) followed by one
//! line per iteration (`"kind": "iteration"`).

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::config::FWConfig;
use super::hull::HullCoords;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexScore {
    pub id: String,
    pub score: f64,
}

/// Merge weights chosen in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRecord {
    Scalar(Vec<f64>),
    PerLayer(IndexMap<String, Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// `<grad, vertex>` for every vertex, pool order.
    pub scores: Vec<VertexScore>,
    /// Per-layer scores, one list per layer in pool order (layer-wise LMO only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_scores: Option<IndexMap<String, Vec<f64>>>,
    /// Selected vertex ids, best first (task-wise LMO).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected: Vec<String>,
    /// Selected vertex ids per layer, best first (layer-wise LMO).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_per_layer: Option<IndexMap<String, Vec<String>>>,
    pub gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaRecord>,
    pub loss_before: f64,
    pub loss_after: f64,
    /// Coordinates after the update; absent when an external merger is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barycentric: Option<HullCoords>,
    /// Cumulative objective gradient evaluations.
    pub grad_evals: usize,
    /// Cumulative objective loss-only evaluations.
    pub loss_evals: usize,
}

/// Everything needed to reconstruct how a run was configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config: FWConfig,
    /// `k` after defaults were applied.
    pub resolved_k: usize,
    pub pool: Vec<String>,
    /// Id of the vertex that holds the initial model.
    pub initial_vertex: String,
    /// True when the initial model was not already in the pool and was appended.
    pub initial_added: bool,
    pub feasibility_unverified: bool,
    pub objective: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header(TraceHeader),
    Iteration(IterationRecord),
}

pub(crate) fn write_jsonl(header: &TraceHeader, records: &[IterationRecord], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    let mut push = |line: &Line| -> Result<()> {
        serde_json::to_writer(&mut out, line).map_err(|e| Error::Format(e.to_string()))?;
        out.push(b'\n');
        Ok(())
    };
    push(&Line::Header(header.clone()))?;
    for r in records {
        push(&Line::Iteration(r.clone()))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_jsonl(path: &Path) -> Result<(TraceHeader, Vec<IterationRecord>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let parsed: Line = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        match parsed {
            Line::Header(h) => header = Some(h),
            Line::Iteration(r) => records.push(r),
        }
    }
    let header = header.ok_or_else(|| Error::Format(format!("{}: no header line", path.display())))?;
    Ok((header, records))
}
