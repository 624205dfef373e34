use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tasks::CalibrationBatch;
use crate::error::{Error, Result};
use crate::params::{ParamSet, Schema, Tensor};

/// Layer sizes of a fully connected tanh network with a softmax output.
///
/// Parameters are named `W1, b1, ..., WL, bL`; `Wl` has shape `[out, in]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

/// Activations kept for the backward pass.
struct Forward {
    /// `acts[0]` is the input, `acts[l]` the tanh output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl MlpArch {
    pub fn new(input_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        MlpArch {
            input_dim,
            hidden,
            num_classes,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.num_classes);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn schema(&self) -> Schema {
        let w = self.widths();
        let mut layers = Vec::new();
        for l in 1..w.len() {
            layers.push((format!("W{l}"), vec![w[l], w[l - 1]]));
            layers.push((format!("b{l}"), vec![w[l]]));
        }
        Schema(layers)
    }

    /// Recover the architecture from a parameter schema.
    pub fn from_schema(schema: &Schema) -> Result<Self> {
        let layers = &schema.0;
        if layers.is_empty() || layers.len() % 2 != 0 {
            return Err(Error::Schema("MLP schema needs (W, b) pairs".into()));
        }
        let mut widths = Vec::new();
        for (i, pair) in layers.chunks(2).enumerate() {
            let l = i + 1;
            let (wn, ws) = &pair[0];
            let (bn, bs) = &pair[1];
            if *wn != format!("W{l}") || *bn != format!("b{l}") || ws.len() != 2 || bs.len() != 1 {
                return Err(Error::Schema(format!("unexpected MLP layer pair `{wn}`, `{bn}`")));
            }
            if bs[0] != ws[0] || widths.last().is_some_and(|&prev| prev != ws[1]) {
                return Err(Error::Schema(format!("layer {l} shapes do not chain")));
            }
            if widths.is_empty() {
                widths.push(ws[1]);
            }
            widths.push(ws[0]);
        }
        let num_classes = widths.pop().unwrap();
        let input_dim = widths.remove(0);
        Ok(MlpArch {
            input_dim,
            hidden: widths,
            num_classes,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        for (name, shape) in self.schema().0 {
            let numel: usize = shape.iter().product();
            let data = if shape.len() == 2 {
                let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..numel).map(|_| rng.random_range(-bound..bound)).collect()
            } else {
                vec![0.0; numel]
            };
            p.insert(name, Tensor::new(shape, data).expect("schema shapes are valid"))
                .expect("schema names are unique");
        }
        p
    }

    pub fn zeros(&self) -> ParamSet {
        self.init(0).zeros_like()
    }

    pub fn check(&self, params: &ParamSet) -> Result<()> {
        match self.schema().diff(&params.schema()) {
            None => Ok(()),
            Some(d) => Err(Error::Schema(d)),
        }
    }

    pub fn check_batch(&self, batch: &CalibrationBatch) -> Result<()> {
        if batch.input_dim != self.input_dim || batch.num_classes != self.num_classes {
            return Err(Error::Schema(format!(
                "batch `{}` is {}-dim/{} classes, model expects {}/{}",
                batch.task_id, batch.input_dim, batch.num_classes, self.input_dim, self.num_classes
            )));
        }
        Ok(())
    }

    fn weights<'a>(&self, params: &'a ParamSet, l: usize) -> (&'a [f64], &'a [f64]) {
        (
            params.layer(&format!("W{l}")).unwrap().data(),
            params.layer(&format!("b{l}")).unwrap().data(),
        )
    }

    fn forward(&self, params: &ParamSet, x: &[f64]) -> Forward {
        let w = self.widths();
        let last = w.len() - 1;
        let mut acts = vec![x.to_vec()];
        let mut logits = Vec::new();
        for l in 1..=last {
            let (wm, b) = self.weights(params, l);
            let input = &acts[l - 1];
            let mut z = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &wm[o * w[l - 1]..(o + 1) * w[l - 1]];
                for (wi, xi) in row.iter().zip(input) {
                    *zo += wi * xi;
                }
            }
            if l == last {
                logits = z;
            } else {
                acts.push(z.into_iter().map(f64::tanh).collect());
            }
        }
        Forward { acts, logits }
    }

    /// Output logits for one sample.
    pub fn logits(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        self.forward(params, x).logits
    }

    /// Mean softmax cross-entropy over `batch`, and its gradient.
    pub fn batch_loss_and_grad(
        &self,
        params: &ParamSet,
        batch: &CalibrationBatch,
    ) -> Result<(f64, ParamSet)> {
        self.check(params)?;
        self.check_batch(batch)?;
        let w = self.widths();
        let last = w.len() - 1;
        let inv_n = 1.0 / batch.len() as f64;
        let mut grad = params.zeros_like();
        let mut loss = 0.0;

        for (i, &y) in batch.labels().iter().enumerate() {
            let fwd = self.forward(params, batch.sample(i));
            let max = fwd.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = fwd.logits.iter().map(|z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            loss += (sum.ln() + max - fwd.logits[y]) * inv_n;

            let mut delta: Vec<f64> = exps.iter().map(|e| e / sum * inv_n).collect();
            delta[y] -= inv_n;

            for l in (1..=last).rev() {
                let input = &fwd.acts[l - 1];
                {
                    let gw = grad.layer_mut(&format!("W{l}")).unwrap().data_mut();
                    for (o, d) in delta.iter().enumerate() {
                        let row = &mut gw[o * w[l - 1]..(o + 1) * w[l - 1]];
                        for (g, xi) in row.iter_mut().zip(input) {
                            *g += d * xi;
                        }
                    }
                }
                {
                    let gb = grad.layer_mut(&format!("b{l}")).unwrap().data_mut();
                    for (g, d) in gb.iter_mut().zip(&delta) {
                        *g += d;
                    }
                }
                if l > 1 {
                    let (wm, _) = self.weights(params, l);
                    let mut back = vec![0.0; w[l - 1]];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &wm[o * w[l - 1]..(o + 1) * w[l - 1]];
                        for (bj, wj) in back.iter_mut().zip(row) {
                            *bj += wj * d;
                        }
                    }
                    for (bj, a) in back.iter_mut().zip(input) {
                        *bj *= 1.0 - a * a;
                    }
                    delta = back;
                }
            }
        }
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Numerics(format!(
                "non-finite loss or gradient on batch `{}`",
                batch.task_id
            )));
        }
        Ok((loss, grad))
    }

    pub fn batch_loss(&self, params: &ParamSet, batch: &CalibrationBatch) -> Result<f64> {
        self.check(params)?;
        self.check_batch(batch)?;
        let mut loss = 0.0;
        let inv_n = 1.0 / batch.len() as f64;
        for (i, &y) in batch.labels().iter().enumerate() {
            let z = self.forward(params, batch.sample(i)).logits;
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            loss += (sum.ln() + max - z[y]) * inv_n;
        }
        if !loss.is_finite() {
            return Err(Error::Numerics(format!("non-finite loss on batch `{}`", batch.task_id)));
        }
        Ok(loss)
    }
}
