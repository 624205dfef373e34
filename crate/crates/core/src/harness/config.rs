use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::TiesConfig;
use crate::error::{Error, Result};
use crate::fw::{FWConfig, Variant};
use crate::toy::{load_suite, TaskSpec};

/// Whether the checkpoints added along a sweep match evaluation tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

impl Relevance {
    pub fn as_str(self) -> &'static str {
        match self {
            Relevance::Relevant => "relevant",
            Relevance::Irrelevant => "irrelevant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub hidden: Vec<usize>,
    /// Seed of the shared initial model every checkpoint is fine-tuned from.
    pub seed: u64,
    /// Optional multi-task pretraining of the initial model.
    #[serde(default)]
    pub pretrain: Option<PretrainConfig>,
}

/// Full-batch gradient descent on the mean loss of several tasks' training
/// splits, applied to the initial model before any fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub tasks: Vec<String>,
    pub epochs: usize,
    pub lr: f64,
}

/// Which checkpoints exist and in what order they join the pool. A sweep of
/// size `n` uses the first `n` entries of `order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolPlan {
    pub order: Vec<String>,
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodSpec {
    FwHard {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "FWConfig::hard")]
        config: FWConfig,
    },
    FwSoft {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "FWConfig::soft")]
        config: FWConfig,
    },
    WeightAverage {
        #[serde(default)]
        label: Option<String>,
    },
    TaskArithmetic {
        #[serde(default)]
        label: Option<String>,
        lambda: f64,
    },
    Ties {
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        config: TiesConfig,
    },
}

impl MethodSpec {
    fn kind(&self) -> &'static str {
        match self {
            MethodSpec::FwHard { .. } => "fw-hard",
            MethodSpec::FwSoft { .. } => "fw-soft",
            MethodSpec::WeightAverage { .. } => "weight-average",
            MethodSpec::TaskArithmetic { .. } => "task-arithmetic",
            MethodSpec::Ties { .. } => "ties",
        }
    }

    /// Name used in reports and trace file names.
    pub fn name(&self) -> String {
        let label = match self {
            MethodSpec::FwHard { label, .. }
            | MethodSpec::FwSoft { label, .. }
            | MethodSpec::WeightAverage { label }
            | MethodSpec::TaskArithmetic { label, .. }
            | MethodSpec::Ties { label, .. } => label,
        };
        label.clone().unwrap_or_else(|| self.kind().to_string())
    }

    fn validate(&self) -> Result<()> {
        match self {
            MethodSpec::FwHard { config, .. } if config.variant != Variant::Hard => Err(Error::Config(
                format!("method `{}` needs variant hard", self.name()),
            )),
            MethodSpec::FwSoft { config, .. } if config.variant != Variant::Soft => Err(Error::Config(
                format!("method `{}` needs variant soft", self.name()),
            )),
            MethodSpec::TaskArithmetic { lambda, .. } if !lambda.is_finite() => {
                Err(Error::Config("task-arithmetic lambda must be finite".into()))
            }
            MethodSpec::Ties { config, .. } => config.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Pool sizes, strictly ascending.
    pub sizes: Vec<usize>,
    pub relevance: Relevance,
}

fn default_calibration() -> usize {
    100
}

/// A scaling or relevance experiment over a toy task suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Task suite file, relative to the config file's directory.
    pub suite: PathBuf,
    pub arch: ArchConfig,
    pub pool: PoolPlan,
    pub eval_tasks: Vec<String>,
    /// Training samples per evaluation task given to data-informed methods.
    #[serde(default = "default_calibration")]
    pub n_calibration: usize,
    pub methods: Vec<MethodSpec>,
    pub sweep: SweepConfig,
    /// Output directory, relative to the config file's directory.
    pub output_dir: PathBuf,
    /// Fill the `wall_ms` report column. Off by default so reports are
    /// byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    /// Parse a config file and resolve its relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.suite = dir.join(&cfg.suite);
        cfg.output_dir = dir.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn load_suite(&self) -> Result<Vec<TaskSpec>> {
        load_suite(&self.suite)
    }

    /// Check the config against its suite. Structural checks that need no
    /// suite run first.
    pub fn validate(&self, suite: &[TaskSpec]) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods list is empty".into()));
        }
        let mut names: Vec<String> = Vec::new();
        for m in &self.methods {
            m.validate()?;
            let name = m.name();
            if names.contains(&name) {
                return Err(Error::Config(format!("duplicate method name `{name}`")));
            }
            names.push(name);
        }
        if self.eval_tasks.is_empty() {
            return Err(Error::Config("eval_tasks is empty".into()));
        }
        if self.n_calibration == 0 {
            return Err(Error::Config("n_calibration must be positive".into()));
        }
        if self.pool.order.is_empty() {
            return Err(Error::Config("pool order is empty".into()));
        }
        if !(self.pool.lr > 0.0 && self.pool.lr.is_finite()) {
            return Err(Error::Config("pool lr must be positive".into()));
        }
        let sizes = &self.sweep.sizes;
        if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep sizes must be positive and strictly ascending".into()));
        }
        if *sizes.last().unwrap() > self.pool.order.len() {
            return Err(Error::Config(format!(
                "largest sweep size {} exceeds the {} planned checkpoints",
                sizes.last().unwrap(),
                self.pool.order.len()
            )));
        }

        let find = |id: &str| suite.iter().find(|t| t.task_id == id);
        let pretrain_tasks = self.arch.pretrain.iter().flat_map(|p| &p.tasks);
        if let Some(p) = &self.arch.pretrain {
            if p.tasks.is_empty() || !(p.lr > 0.0 && p.lr.is_finite()) {
                return Err(Error::Config("pretrain needs tasks and a positive lr".into()));
            }
        }
        for id in self.eval_tasks.iter().chain(&self.pool.order).chain(pretrain_tasks.clone()) {
            if find(id).is_none() {
                return Err(Error::Config(format!("task `{id}` is not in the suite")));
            }
        }
        for (i, id) in self.pool.order.iter().enumerate() {
            if self.pool.order[..i].contains(id) {
                return Err(Error::Config(format!("task `{id}` appears twice in the pool order")));
            }
        }
        let first = find(&self.pool.order[0]).unwrap();
        for id in self.eval_tasks.iter().chain(&self.pool.order).chain(pretrain_tasks) {
            let t = find(id).unwrap();
            if t.input_dim != first.input_dim || t.num_classes != first.num_classes {
                return Err(Error::Config(format!(
                    "task `{id}` does not share input_dim/num_classes with `{}`",
                    first.task_id
                )));
            }
            if self.eval_tasks.contains(id) && t.n_train < self.n_calibration {
                return Err(Error::Config(format!(
                    "task `{id}` has {} training samples, fewer than n_calibration",
                    t.n_train
                )));
            }
        }
        // checkpoints that join after the smallest size must follow the relevance mode
        for id in &self.pool.order[sizes[0]..*sizes.last().unwrap()] {
            let relevant = self.eval_tasks.contains(id);
            let wanted = self.sweep.relevance == Relevance::Relevant;
            if relevant != wanted {
                return Err(Error::Config(format!(
                    "checkpoint `{id}` joins a {} sweep but is {}",
                    self.sweep.relevance.as_str(),
                    if relevant { "relevant" } else { "irrelevant" }
                )));
            }
        }
        Ok(())
    }
}
