//! The pieces of one Frank-Wolfe iteration: gap, step size, merge functions
//! and the soft variant's inner solve for merging weights.

use indexmap::IndexMap;
use serde::Serialize;

use super::config::{FWConfig, LambdaGranularity};
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::params::{dot, dot_per_layer, ParamSet};
use crate::simplex::{project_simplex, uniform_weights, SimplexMode, SimplexWeights};

/// FW gap `<-grad, s - theta>`.
pub fn fw_gap(grad: &ParamSet, theta: &ParamSet, s: &ParamSet) -> Result<f64> {
    let d = s.sub(theta)?;
    // + 0.0 folds a negative zero into zero
    Ok(-dot(grad, &d)? + 0.0)
}

/// Grid line search of `l(theta + gamma * d)` over `points` evenly spaced
/// values of `gamma` in `[0, 1]`. Returns the lowest minimizing `gamma` and its loss.
pub fn line_search<O: Objective + ?Sized>(
    obj: &O,
    theta: &ParamSet,
    d: &ParamSet,
    points: usize,
) -> Result<(f64, f64)> {
    if points < 2 {
        return Err(Error::Config(format!("line search needs >= 2 points, got {points}")));
    }
    theta.check_same_schema(d)?;
    let mut best = (0.0, f64::INFINITY);
    let mut probe = theta.clone();
    for i in 0..points {
        let gamma = i as f64 / (points - 1) as f64;
        for ((_, p), ((_, t), (_, dt))) in probe.iter_mut().zip(theta.iter().zip(d.iter())) {
            for (pv, (tv, dv)) in p.data_mut().iter_mut().zip(t.data().iter().zip(dt.data())) {
                *pv = tv + gamma * dv;
            }
        }
        let loss = obj.loss(&probe)?;
        if !loss.is_finite() {
            return Err(Error::Numerics(format!("loss not finite at gamma = {gamma}")));
        }
        if loss < best.1 {
            best = (gamma, loss);
        }
    }
    Ok(best)
}

/// `(1 - gamma) * theta + gamma * s`.
pub fn merge_convex(theta: &ParamSet, s: &ParamSet, gamma: f64) -> Result<ParamSet> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("step size {gamma} outside [0, 1]")));
    }
    theta.check_same_schema(s)?;
    let mut out = theta.clone();
    for ((_, o), (_, st)) in out.iter_mut().zip(s.iter()) {
        for (ov, sv) in o.data_mut().iter_mut().zip(st.data()) {
            *ov = (1.0 - gamma) * *ov + gamma * sv;
        }
    }
    Ok(out)
}

/// Soft merging weights: one simplex vector, or one per layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum LambdaWeights {
    Scalar(SimplexWeights),
    PerLayer(IndexMap<String, SimplexWeights>),
}

impl LambdaWeights {
    pub fn k(&self) -> usize {
        match self {
            LambdaWeights::Scalar(w) => w.len(),
            LambdaWeights::PerLayer(m) => m.values().next().map_or(0, SimplexWeights::len),
        }
    }

    /// Weights used for `layer`.
    pub fn for_layer(&self, layer: &str) -> &[f64] {
        match self {
            LambdaWeights::Scalar(w) => w.values(),
            LambdaWeights::PerLayer(m) => m[layer].values(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LambdaWeights::Scalar(w) => w.validate(),
            LambdaWeights::PerLayer(m) => {
                let k = self.k();
                for (l, w) in m {
                    w.validate()
                        .map_err(|e| Error::Simplex(format!("layer `{l}`: {e}")))?;
                    if w.len() != k {
                        return Err(Error::Simplex(format!("layer `{l}` has {} weights, expected {k}", w.len())));
                    }
                }
                Ok(())
            }
        }
    }

    /// The weight vector that puts everything on vertex `index`.
    pub fn vertex(like: &LambdaWeights, index: usize, mode: SimplexMode) -> Result<LambdaWeights> {
        let k = like.k();
        Ok(match like {
            LambdaWeights::Scalar(_) => LambdaWeights::Scalar(SimplexWeights::vertex(k, index, mode)?),
            LambdaWeights::PerLayer(m) => LambdaWeights::PerLayer(
                m.keys()
                    .map(|l| Ok((l.clone(), SimplexWeights::vertex(k, index, mode)?)))
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

/// `theta + sum_j lambda_j (v_j - theta)`, layer by layer, without validating
/// the weights.
pub fn soft_combination(theta: &ParamSet, vertices: &[&ParamSet], lambda: &LambdaWeights) -> Result<ParamSet> {
    if vertices.len() != lambda.k() {
        return Err(Error::Dimension(format!(
            "{} vertices for {} weights",
            vertices.len(),
            lambda.k()
        )));
    }
    for v in vertices {
        theta.check_same_schema(v)?;
    }
    if let LambdaWeights::PerLayer(m) = lambda {
        if !theta.layer_names().eq(m.keys().map(String::as_str)) {
            return Err(Error::Schema("per-layer weights do not match the parameter layers".into()));
        }
    }
    let mut out = theta.clone();
    for (name, o) in out.iter_mut() {
        let weights = lambda.for_layer(name);
        let base = theta.layer(name).unwrap().data();
        for (j, v) in vertices.iter().enumerate() {
            let w = weights[j];
            let vd = v.layer(name).unwrap().data();
            for ((ov, bv), vv) in o.data_mut().iter_mut().zip(base).zip(vd) {
                *ov += w * (vv - bv);
            }
        }
    }
    if !out.is_finite() {
        return Err(Error::Numerics("soft merge produced non-finite values".into()));
    }
    Ok(out)
}

/// Soft merge function: `theta + sum_j lambda_j (v_j - theta)` with validated weights.
pub fn merge_soft(theta: &ParamSet, vertices: &[&ParamSet], lambda: &LambdaWeights) -> Result<ParamSet> {
    lambda.validate()?;
    soft_combination(theta, vertices, lambda)
}

/// Result of the inner projected-gradient solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSolution {
    pub weights: LambdaWeights,
    /// `phi` at the returned weights.
    pub objective: f64,
    /// `phi` at the best single vertex (weights concentrated on vertex 0).
    pub vertex_objective: f64,
    pub grad_evals: usize,
    pub loss_evals: usize,
}

/// Minimize `phi(lambda) = l(theta + sum_j lambda_j (v_j - theta))` over the
/// simplex by projected gradient descent from uniform weights.
///
/// `d phi / d lambda_j = <grad l, v_j - theta>` (per layer for per-layer
/// weights). The best iterate is returned; the weights concentrated on
/// `vertices[0]` (the LMO's best vertex) are also evaluated and win if they are
/// better, so the result never does worse than the single best vertex. In
/// capped mode the all-zero weights (stay at `theta`) are a candidate too.
pub fn inner_optimize_lambda<O: Objective + ?Sized>(
    obj: &O,
    theta: &ParamSet,
    vertices: &[&ParamSet],
    cfg: &FWConfig,
) -> Result<LambdaSolution> {
    let k = vertices.len();
    if k == 0 {
        return Err(Error::Dimension("inner optimization over zero vertices".into()));
    }
    if cfg.inner_steps == 0 {
        return Err(Error::Config("inner_steps must be at least 1".into()));
    }
    let mode = cfg.simplex_mode;
    let uniform = uniform_weights(k)?;
    let uniform = SimplexWeights::new(uniform.into_vec(), mode)?;
    let mut lambda = match cfg.lambda_granularity {
        LambdaGranularity::Scalar => LambdaWeights::Scalar(uniform),
        LambdaGranularity::Layer => LambdaWeights::PerLayer(
            theta.layer_names().map(|l| (l.to_string(), uniform.clone())).collect(),
        ),
    };

    // <v_j, .> per layer is reused every step: d phi / d lambda_j = <g, v_j> - <g, theta>
    let mut best: Option<(f64, LambdaWeights)> = None;
    let mut grad_evals = 0;
    let mut loss_evals = 0;
    for step in 0..cfg.inner_steps {
        let point = soft_combination(theta, vertices, &lambda)?;
        let (phi, g) = obj.loss_and_grad(&point).map_err(|e| match e {
            Error::Numerics(m) => Error::Numerics(format!("inner step {step}: {m}")),
            other => other,
        })?;
        grad_evals += 1;
        if !phi.is_finite() {
            return Err(Error::Numerics(format!("inner step {step}: loss is not finite")));
        }
        if best.as_ref().is_none_or(|(b, _)| phi < *b) {
            best = Some((phi, lambda.clone()));
        }
        lambda = match &lambda {
            LambdaWeights::Scalar(w) => {
                let base = dot(&g, theta)?;
                let mut next = Vec::with_capacity(k);
                for (j, v) in vertices.iter().enumerate() {
                    let dj = dot(&g, v)? - base;
                    next.push(w.values()[j] - cfg.inner_lr * dj);
                }
                LambdaWeights::Scalar(project_simplex(&next, mode)?)
            }
            LambdaWeights::PerLayer(m) => {
                let base = dot_per_layer(&g, theta)?;
                let vd: Vec<IndexMap<String, f64>> =
                    vertices.iter().map(|v| dot_per_layer(&g, v)).collect::<Result<_>>()?;
                let mut out = IndexMap::with_capacity(m.len());
                for (l, w) in m {
                    let next: Vec<f64> = (0..k)
                        .map(|j| w.values()[j] - cfg.inner_lr * (vd[j][l] - base[l]))
                        .collect();
                    out.insert(l.clone(), project_simplex(&next, mode)?);
                }
                LambdaWeights::PerLayer(out)
            }
        };
    }

    let mut consider = |weights: LambdaWeights, best: &mut Option<(f64, LambdaWeights)>| -> Result<f64> {
        let point = soft_combination(theta, vertices, &weights)?;
        let phi = obj.loss(&point)?;
        loss_evals += 1;
        if !phi.is_finite() {
            return Err(Error::Numerics("inner solve: loss is not finite".into()));
        }
        if best.as_ref().is_none_or(|(b, _)| phi < *b) {
            *best = Some((phi, weights));
        }
        Ok(phi)
    };
    consider(lambda.clone(), &mut best)?;
    let vertex_weights = LambdaWeights::vertex(&lambda, 0, mode)?;
    let vertex_objective = consider(vertex_weights, &mut best)?;
    if mode == SimplexMode::Capped {
        // staying at theta is feasible in capped mode
        let zero = SimplexWeights::new(vec![0.0; k], mode)?;
        let stay = match &lambda {
            LambdaWeights::Scalar(_) => LambdaWeights::Scalar(zero),
            LambdaWeights::PerLayer(m) => LambdaWeights::PerLayer(m.keys().map(|l| (l.clone(), zero.clone())).collect()),
        };
        consider(stay, &mut best)?;
    }

    let (objective, weights) = best.expect("at least one step was evaluated");
    Ok(LambdaSolution {
        weights,
        objective,
        vertex_objective,
        grad_evals,
        loss_evals,
    })
}
