use super::mlp::MlpArch;
use super::tasks::CalibrationBatch;
use crate::error::{Error, Result};
use crate::params::ParamSet;

/// Full-batch gradient descent from `base` on one task.
pub fn finetune(base: &ParamSet, task: &CalibrationBatch, epochs: usize, lr: f64) -> Result<ParamSet> {
    let arch = MlpArch::from_schema(&base.schema())?;
    let mut params = base.clone();
    for epoch in 0..epochs {
        let (loss, grad) = arch.batch_loss_and_grad(&params, task).map_err(|e| match e {
            Error::Numerics(m) => Error::Numerics(format!("fine-tuning diverged at epoch {epoch}: {m}")),
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::Numerics(format!("fine-tuning diverged at epoch {epoch}")));
        }
        params.axpy_inplace(-lr, &grad)?;
        if !params.is_finite() {
            return Err(Error::Numerics(format!("fine-tuning diverged at epoch {epoch}: weights overflowed")));
        }
    }
    Ok(params)
}

/// Fraction of samples whose largest logit is the label; ties go to the
/// lowest class index.
pub fn accuracy(params: &ParamSet, batch: &CalibrationBatch) -> Result<f64> {
    let arch = MlpArch::from_schema(&params.schema())?;
    arch.check_batch(batch)?;
    let mut correct = 0usize;
    for (i, &y) in batch.labels().iter().enumerate() {
        let z = arch.logits(params, batch.sample(i));
        let mut best = 0;
        for (k, v) in z.iter().enumerate().skip(1) {
            if *v > z[best] {
                best = k;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch.len() as f64)
}
