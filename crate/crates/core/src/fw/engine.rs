use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{FWConfig, LmoGranularity, MergeFnKind, Variant};
use super::hull::HullCoords;
use super::lmo::{score_pool, ScoreTable, Selection};
use super::steps::{fw_gap, inner_optimize_lambda, line_search, merge_convex, merge_soft, LambdaWeights};
use super::trace::{read_jsonl, write_jsonl, IterationRecord, LambdaRecord, TraceHeader, VertexScore};
use crate::baselines::TiesMergeFn;
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::params::ParamSet;
use crate::pool::{CheckpointPool, Checkout, ResidencyGuard};

/// A pluggable merge function used in place of the convex update.
///
/// `weights` are the step size (hard variant, one vertex) or the soft merging
/// weights. Outputs are not assumed to stay inside the hull.
pub trait MergeFn {
    fn name(&self) -> &str;
    fn merge(&self, theta: &ParamSet, vertices: &[&ParamSet], weights: &[f64]) -> Result<ParamSet>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GapBelowEpsilon,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct FWResult {
    pub merged: ParamSet,
    pub trace: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub header: TraceHeader,
    /// The vertex set actually used: the input pool plus the initial model if
    /// it had to be appended.
    pub vertices: CheckpointPool,
}

impl FWResult {
    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(&self.header, &self.trace, path.as_ref())
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.trace.last().map(|r| r.loss_after)
    }

    pub fn min_gap(&self) -> f64 {
        self.trace.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min)
    }
}

/// Parse a trace written by [`FWResult::write_trace`].
pub fn read_trace(path: impl AsRef<Path>) -> Result<(TraceHeader, Vec<IterationRecord>)> {
    read_jsonl(path.as_ref())
}

/// A vertex held in memory for the current iteration.
enum Held {
    Pool(Checkout),
    Composite(ParamSet, #[allow(dead_code)] ResidencyGuard),
}

impl Deref for Held {
    type Target = ParamSet;
    fn deref(&self) -> &ParamSet {
        match self {
            Held::Pool(c) => c,
            Held::Composite(p, _) => p,
        }
    }
}

/// Materialize the selected vertices. Per-layer selections are stitched
/// together from one pool checkout at a time.
fn assemble(pool: &CheckpointPool, selections: &[Selection], like: &ParamSet) -> Result<Vec<Held>> {
    if selections.iter().all(|s| matches!(s, Selection::Vertex(_))) {
        return selections
            .iter()
            .map(|s| match s {
                Selection::Vertex(i) => pool.load(*i).map(Held::Pool),
                Selection::PerLayer(_) => unreachable!(),
            })
            .collect();
    }
    let mut buffers: Vec<(ParamSet, ResidencyGuard)> = selections
        .iter()
        .map(|_| (like.clone(), pool.stats().acquire()))
        .collect();
    let layers: Vec<String> = like.layer_names().map(str::to_string).collect();
    let mut needed: Vec<usize> = selections
        .iter()
        .flat_map(|s| layers.iter().map(move |l| s.vertex_for(l)))
        .collect();
    needed.sort_unstable();
    needed.dedup();
    for index in needed {
        let vertex = pool.load(index)?;
        for (sel, (buf, _)) in selections.iter().zip(buffers.iter_mut()) {
            for l in &layers {
                if sel.vertex_for(l) == index {
                    let src = vertex.layer(l).expect("schema checked").data();
                    buf.layer_mut(l).expect("schema checked").data_mut().copy_from_slice(src);
                }
            }
        }
    }
    Ok(buffers.into_iter().map(|(p, g)| Held::Composite(p, g)).collect())
}

fn unique_id(pool: &CheckpointPool, base: &str) -> String {
    let mut id = base.to_string();
    let mut n = 1;
    while pool.index_of(&id).is_some() {
        id = format!("{base}~{n}");
        n += 1;
    }
    id
}

/// Run Frank-Wolfe merging with the merge function named by `cfg`.
pub fn run_fw<O: Objective + ?Sized>(
    cfg: &FWConfig,
    pool: &CheckpointPool,
    obj: &O,
    theta0: &ParamSet,
) -> Result<FWResult> {
    match cfg.merge_fn {
        MergeFnKind::Convex => run_fw_with(cfg, pool, obj, theta0, None),
        MergeFnKind::External => match cfg.external_merger.as_deref() {
            Some("ties") => {
                let ties = TiesMergeFn::new(cfg.ties_density)?;
                run_fw_with(cfg, pool, obj, theta0, Some(&ties))
            }
            Some(other) => Err(Error::Config(format!("unknown external merger `{other}`"))),
            None => Err(Error::Config("merge_fn = external needs external_merger".into())),
        },
    }
}

/// Run Frank-Wolfe merging, optionally with a caller-supplied merge function.
pub fn run_fw_with<O: Objective + ?Sized>(
    cfg: &FWConfig,
    pool: &CheckpointPool,
    obj: &O,
    theta0: &ParamSet,
    external: Option<&dyn MergeFn>,
) -> Result<FWResult> {
    if cfg.budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    let mut vertices = pool.clone();
    if !vertices.is_empty() {
        if let Some(d) = vertices.check_schema()?.diff(&theta0.schema()) {
            return Err(Error::Schema(format!("initial model vs pool: {d}")));
        }
    }

    // The initial model joins the vertex set unless an identical checkpoint is already there.
    let wanted = theta0.content_hash();
    let mut initial = None;
    for i in 0..vertices.len() {
        if vertices.load(i)?.content_hash() == wanted {
            initial = Some(vertices.id(i).to_string());
            break;
        }
    }
    let initial_added = initial.is_none();
    let initial_vertex = match initial {
        Some(id) => id,
        None => {
            let id = unique_id(&vertices, "theta0");
            vertices.push_memory(id.clone(), theta0.clone())?;
            id
        }
    };
    vertices.check_schema()?;
    let n = vertices.len();
    cfg.validate(n)?;
    let k = cfg.resolved_k(n);

    let header = TraceHeader {
        config: cfg.clone(),
        resolved_k: k,
        pool: vertices.ids().map(str::to_string).collect(),
        initial_vertex: initial_vertex.clone(),
        initial_added,
        feasibility_unverified: external.is_some(),
        objective: obj.describe(),
    };
    let layers: Vec<String> = theta0.layer_names().map(str::to_string).collect();

    let mut theta = theta0.clone();
    let mut hull = external.is_none().then(|| HullCoords::vertex(&initial_vertex));
    let mut trace = Vec::with_capacity(cfg.budget);
    let mut stop_reason = StopReason::BudgetExhausted;
    let (mut grad_evals, mut loss_evals) = (0usize, 0usize);

    for t in 0..cfg.budget {
        let (loss, grad) = obj.loss_and_grad(&theta)?;
        grad_evals += 1;
        if !loss.is_finite() {
            return Err(Error::Numerics(format!("loss not finite at iteration {t}")));
        }
        let table = score_pool(&vertices, &grad)?;
        let selections = match cfg.variant {
            Variant::Hard => vec![table.hard(cfg.lmo)],
            Variant::Soft => table.topk(k, cfg.lmo)?,
        };
        let held = assemble(&vertices, &selections, &theta)?;
        let gap = fw_gap(&grad, &theta, &held[0])?;

        let mut record = new_record(t, &table, &selections, cfg.lmo, &layers, gap, loss);
        if gap <= cfg.epsilon {
            record.barycentric = hull.clone();
            record.grad_evals = grad_evals;
            record.loss_evals = loss_evals;
            trace.push(record);
            stop_reason = StopReason::GapBelowEpsilon;
            break;
        }

        let next = match cfg.variant {
            Variant::Hard => {
                let d = held[0].sub(&theta)?;
                let (gamma, _) = line_search(obj, &theta, &d, cfg.line_search_points)?;
                loss_evals += cfg.line_search_points;
                let next = match external {
                    Some(m) => m.merge(&theta, &[&held[0]], &[gamma])?,
                    None => merge_convex(&theta, &held[0], gamma)?,
                };
                if let Some(h) = hull.as_mut() {
                    match &selections[0] {
                        Selection::Vertex(i) => h.blend_shared(1.0 - gamma, &[(vertices.id(*i), gamma)]),
                        sel => h.blend_layers(layers.iter().map(String::as_str), |l| {
                            (1.0 - gamma, vec![(vertices.id(sel.vertex_for(l)).to_string(), gamma)])
                        }),
                    }
                }
                record.gamma = Some(gamma);
                next
            }
            Variant::Soft => {
                let refs: Vec<&ParamSet> = held.iter().map(|h| &**h).collect();
                let sol = inner_optimize_lambda(obj, &theta, &refs, cfg)?;
                grad_evals += sol.grad_evals;
                loss_evals += sol.loss_evals;
                let next = match external {
                    Some(m) => m.merge(&theta, &refs, sol.weights.for_layer(&layers[0]))?,
                    None => merge_soft(&theta, &refs, &sol.weights)?,
                };
                if let Some(h) = hull.as_mut() {
                    update_soft_hull(h, &vertices, &selections, &sol.weights, &layers);
                }
                record.lambda = Some(match &sol.weights {
                    LambdaWeights::Scalar(w) => LambdaRecord::Scalar(w.values().to_vec()),
                    LambdaWeights::PerLayer(m) => LambdaRecord::PerLayer(
                        m.iter().map(|(l, w)| (l.clone(), w.values().to_vec())).collect(),
                    ),
                });
                next
            }
        };
        drop(held);
        if !next.is_finite() {
            return Err(Error::Numerics(format!("merged model not finite at iteration {t}")));
        }
        theta = next;
        record.loss_after = obj.loss(&theta)?;
        loss_evals += 1;
        record.barycentric = hull.clone();
        record.grad_evals = grad_evals;
        record.loss_evals = loss_evals;
        trace.push(record);
    }

    Ok(FWResult {
        merged: theta,
        trace,
        stop_reason,
        header,
        vertices,
    })
}

fn update_soft_hull(
    hull: &mut HullCoords,
    vertices: &CheckpointPool,
    selections: &[Selection],
    weights: &LambdaWeights,
    layers: &[String],
) {
    let task_wise = selections.iter().all(|s| matches!(s, Selection::Vertex(_)));
    match (task_wise, weights) {
        (true, LambdaWeights::Scalar(w)) => {
            let picks: Vec<(&str, f64)> = selections
                .iter()
                .zip(w.values())
                .map(|(s, &lam)| (vertices.id(s.vertex_for("")), lam))
                .collect();
            hull.blend_shared(1.0 - w.sum(), &picks);
        }
        _ => hull.blend_layers(layers.iter().map(String::as_str), |l| {
            let lam = weights.for_layer(l);
            let keep = 1.0 - lam.iter().sum::<f64>();
            let picks = selections
                .iter()
                .zip(lam)
                .map(|(s, &w)| (vertices.id(s.vertex_for(l)).to_string(), w))
                .collect();
            (keep, picks)
        }),
    }
}

fn new_record(
    t: usize,
    table: &ScoreTable,
    selections: &[Selection],
    lmo: LmoGranularity,
    layers: &[String],
    gap: f64,
    loss: f64,
) -> IterationRecord {
    let scores = table
        .ids
        .iter()
        .zip(&table.total)
        .map(|(id, &score)| VertexScore { id: id.clone(), score })
        .collect();
    let (layer_scores, selected, selected_per_layer) = match lmo {
        LmoGranularity::Task => (
            None,
            selections.iter().map(|s| table.ids[s.vertex_for("")].clone()).collect(),
            None,
        ),
        LmoGranularity::Layer => (
            Some(
                layers
                    .iter()
                    .map(|l| (l.clone(), table.per_layer.iter().map(|m| m[l]).collect()))
                    .collect(),
            ),
            Vec::new(),
            Some(
                layers
                    .iter()
                    .map(|l| {
                        (
                            l.clone(),
                            selections.iter().map(|s| table.ids[s.vertex_for(l)].clone()).collect(),
                        )
                    })
                    .collect(),
            ),
        ),
    };
    IterationRecord {
        t,
        scores,
        layer_scores,
        selected,
        selected_per_layer,
        gap,
        gamma: None,
        lambda: None,
        loss_before: loss,
        loss_after: loss,
        barycentric: None,
        grad_evals: 0,
        loss_evals: 0,
    }
}
