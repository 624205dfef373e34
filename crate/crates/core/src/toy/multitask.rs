use super::mlp::MlpArch;
use super::tasks::CalibrationBatch;
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::params::ParamSet;

/// Name of the aggregation rule, recorded in traces.
pub const AGGREGATION: &str = "mean-of-task-means";

/// Calibration loss over several tasks: the unweighted mean of each batch's
/// mean cross-entropy.
#[derive(Debug, Clone)]
pub struct MultiTaskObjective {
    arch: MlpArch,
    batches: Vec<CalibrationBatch>,
}

impl MultiTaskObjective {
    pub fn new(arch: MlpArch, batches: Vec<CalibrationBatch>) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::Config("objective needs at least one calibration batch".into()));
        }
        for b in &batches {
            arch.check_batch(b)?;
        }
        Ok(MultiTaskObjective { arch, batches })
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn batches(&self) -> &[CalibrationBatch] {
        &self.batches
    }
}

impl Objective for MultiTaskObjective {
    fn loss(&self, params: &ParamSet) -> Result<f64> {
        let mut total = 0.0;
        for b in &self.batches {
            total += self.arch.batch_loss(params, b)?;
        }
        Ok(total / self.batches.len() as f64)
    }

    fn loss_and_grad(&self, params: &ParamSet) -> Result<(f64, ParamSet)> {
        let inv = 1.0 / self.batches.len() as f64;
        let mut total = 0.0;
        let mut grad = params.zeros_like();
        for b in &self.batches {
            let (l, g) = self.arch.batch_loss_and_grad(params, b)?;
            total += l;
            grad.axpy_inplace(inv, &g)?;
        }
        Ok((total * inv, grad))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "multitask-cross-entropy",
            "aggregation": AGGREGATION,
            "arch": self.arch,
            "tasks": self.batches.iter().map(|b| &b.task_id).collect::<Vec<_>>(),
            "samples_per_task": self.batches.iter().map(|b| b.len()).collect::<Vec<_>>(),
        })
    }
}
