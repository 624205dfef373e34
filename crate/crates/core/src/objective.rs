//! The loss/gradient contract the merge loop optimizes.

use crate::error::{Error, Result};
use crate::params::{axpy, dot, ParamSet};

/// A differentiable objective over parameter sets.
///
/// Implementations must be deterministic: repeated calls on the same input
/// return bitwise-identical results.
pub trait Objective {
    fn loss(&self, params: &ParamSet) -> Result<f64> {
        Ok(self.loss_and_grad(params)?.0)
    }

    fn loss_and_grad(&self, params: &ParamSet) -> Result<(f64, ParamSet)>;

    /// Short self-description echoed into trace headers.
    fn describe(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn loss(&self, params: &ParamSet) -> Result<f64> {
        (**self).loss(params)
    }
    fn loss_and_grad(&self, params: &ParamSet) -> Result<(f64, ParamSet)> {
        (**self).loss_and_grad(params)
    }
    fn describe(&self) -> serde_json::Value {
        (**self).describe()
    }
}

/// `l(theta) = scale * ||theta - target||^2`; smooth with constant `2 * scale`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    target: ParamSet,
    scale: f64,
}

impl QuadraticObjective {
    pub fn new(target: ParamSet) -> Self {
        QuadraticObjective { target, scale: 1.0 }
    }

    pub fn with_scale(target: ParamSet, scale: f64) -> Self {
        QuadraticObjective { target, scale }
    }

    pub fn target(&self) -> &ParamSet {
        &self.target
    }

    /// Lipschitz constant of the gradient.
    pub fn smoothness(&self) -> f64 {
        2.0 * self.scale
    }
}

impl Objective for QuadraticObjective {
    fn loss(&self, params: &ParamSet) -> Result<f64> {
        let diff = params.sub(&self.target)?;
        Ok(self.scale * dot(&diff, &diff)?)
    }

    fn loss_and_grad(&self, params: &ParamSet) -> Result<(f64, ParamSet)> {
        let diff = params.sub(&self.target)?;
        let loss = self.scale * dot(&diff, &diff)?;
        if !loss.is_finite() {
            return Err(Error::Numerics("quadratic loss is not finite".into()));
        }
        let grad = axpy(&diff.zeros_like(), 2.0 * self.scale, &diff)?;
        Ok((loss, grad))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({"kind": "quadratic", "scale": self.scale, "dim": self.target.total_dim()})
    }
}
