use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::error::{Error, Result};
use crate::objective::{Objective, QuadraticObjective};
use crate::params::ParamSet;
use crate::toy::{load_suite, MlpArch, MultiTaskObjective};

fn default_scale() -> f64 {
    1.0
}

fn default_calibration() -> usize {
    100
}

/// Objective description for command-line merges. Paths are relative to the
/// JSON file that holds the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `scale * ||theta - target||^2` with the target read from a checkpoint.
    Quadratic {
        target: PathBuf,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Mean calibration cross-entropy of a toy MLP over suite tasks. The
    /// architecture is read off the base model's schema.
    Mlp {
        suite: PathBuf,
        tasks: Vec<String>,
        #[serde(default = "default_calibration")]
        n_calibration: usize,
    },
}

impl ObjectiveSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ObjectiveSpec =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        match &mut spec {
            ObjectiveSpec::Quadratic { target, .. } => *target = dir.join(&*target),
            ObjectiveSpec::Mlp { suite, .. } => *suite = dir.join(&*suite),
        }
        Ok(spec)
    }

    /// Build the objective for models shaped like `base`.
    pub fn build(&self, base: &ParamSet) -> Result<Box<dyn Objective>> {
        match self {
            ObjectiveSpec::Quadratic { target, scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::Config("quadratic scale must be positive".into()));
                }
                let target = load_checkpoint(target)?;
                target.check_same_schema(base)?;
                Ok(Box::new(QuadraticObjective::with_scale(target, *scale)))
            }
            ObjectiveSpec::Mlp { suite, tasks, n_calibration } => {
                if tasks.is_empty() || *n_calibration == 0 {
                    return Err(Error::Config("mlp objective needs tasks and n_calibration >= 1".into()));
                }
                let arch = MlpArch::from_schema(&base.schema())?;
                let suite = load_suite(suite)?;
                let mut batches = Vec::new();
                for id in tasks {
                    let spec = suite
                        .iter()
                        .find(|t| &t.task_id == id)
                        .ok_or_else(|| Error::Config(format!("task `{id}` is not in the suite")))?;
                    let (train, _) = spec.generate()?;
                    batches.push(train.head(*n_calibration));
                }
                Ok(Box::new(MultiTaskObjective::new(arch, batches)?))
            }
        }
    }
}
