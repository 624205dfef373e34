use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_shift() -> f64 {
    3.0
}
fn default_separation() -> f64 {
    2.5
}
fn default_noise() -> f64 {
    1.0
}

/// A synthetic classification task.
///
/// Each class is an isotropic Gaussian blob. The blobs of one task sit around
/// a task-specific center `shift` away from the origin, and the class means
/// are the first `num_classes` columns of a task-specific random rotation,
/// scaled by `separation`. Everything random derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub seed: u64,
    pub input_dim: usize,
    pub num_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, seed: u64, input_dim: usize, num_classes: usize) -> Self {
        TaskSpec {
            task_id: task_id.into(),
            seed,
            input_dim,
            num_classes,
            n_train: 200,
            n_test: 200,
            shift: default_shift(),
            separation: default_separation(),
            noise: default_noise(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes < 2 {
            return Err(Error::Config(format!(
                "task `{}` needs input_dim >= 1 and num_classes >= 2",
                self.task_id
            )));
        }
        if self.num_classes > self.input_dim {
            return Err(Error::Config(format!(
                "task `{}`: num_classes {} exceeds input_dim {}",
                self.task_id, self.num_classes, self.input_dim
            )));
        }
        if !(self.noise >= 0.0 && self.shift.is_finite() && self.separation.is_finite()) {
            return Err(Error::Config(format!("task `{}`: bad blob geometry", self.task_id)));
        }
        Ok(())
    }

    /// Generate with this spec's own split sizes.
    pub fn generate(&self) -> Result<(CalibrationBatch, CalibrationBatch)> {
        generate_task(self, self.n_train, self.n_test)
    }
}

/// Labeled samples of one task, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBatch {
    pub task_id: String,
    pub input_dim: usize,
    pub num_classes: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl CalibrationBatch {
    pub fn new(
        task_id: impl Into<String>,
        input_dim: usize,
        num_classes: usize,
        inputs: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let task_id = task_id.into();
        if labels.is_empty() || inputs.len() != labels.len() * input_dim {
            return Err(Error::Dimension(format!(
                "batch `{task_id}`: {} inputs for {} labels of dim {input_dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Dimension(format!(
                "batch `{task_id}`: label {l} outside [0, {num_classes})"
            )));
        }
        Ok(CalibrationBatch {
            task_id,
            input_dim,
            num_classes,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> CalibrationBatch {
        let n = n.min(self.len()).max(1);
        CalibrationBatch {
            task_id: self.task_id.clone(),
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            inputs: self.inputs[..n * self.input_dim].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

/// Orthonormal columns from Gram-Schmidt on a Gaussian matrix, column-major.
fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            cols.push(v);
        }
    }
    cols
}

/// Deterministic train/test splits for `spec`. Labels cycle through the
/// classes so both splits are balanced.
pub fn generate_task(
    spec: &TaskSpec,
    n_train: usize,
    n_test: usize,
) -> Result<(CalibrationBatch, CalibrationBatch)> {
    spec.validate()?;
    if n_train == 0 || n_test == 0 {
        return Err(Error::Dimension(format!(
            "task `{}`: split sizes must be positive",
            spec.task_id
        )));
    }
    let d = spec.input_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let direction: Vec<f64> = {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / n).collect()
    };
    let rotation = random_rotation(&mut rng, d);
    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|k| {
            (0..d)
                .map(|j| spec.shift * direction[j] + spec.separation * rotation[k][j])
                .collect()
        })
        .collect();

    let mut draw = |n: usize| {
        let mut inputs = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % spec.num_classes;
            for m in &means[y] {
                let z: f64 = rng.sample(StandardNormal);
                inputs.push(m + spec.noise * z);
            }
            labels.push(y);
        }
        CalibrationBatch::new(spec.task_id.clone(), d, spec.num_classes, inputs, labels)
    };
    let train = draw(n_train)?;
    let test = draw(n_test)?;
    Ok((train, test))
}

/// Read a task suite: a JSON array of task specs. Ids and seeds must be unique.
pub fn load_suite(path: impl AsRef<Path>) -> Result<Vec<TaskSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let suite: Vec<TaskSpec> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    validate_suite(&suite)?;
    Ok(suite)
}

pub(crate) fn validate_suite(suite: &[TaskSpec]) -> Result<()> {
    for (i, t) in suite.iter().enumerate() {
        t.validate()?;
        for other in &suite[..i] {
            if other.task_id == t.task_id {
                return Err(Error::Config(format!("duplicate task id `{}`", t.task_id)));
            }
            if other.seed == t.seed {
                return Err(Error::Config(format!(
                    "tasks `{}` and `{}` share seed {}",
                    other.task_id, t.task_id, t.seed
                )));
            }
        }
    }
    Ok(())
}
