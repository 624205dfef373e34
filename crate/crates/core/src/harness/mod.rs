//! Toy-scale experiment harness: fine-tunes a checkpoint zoo, sweeps pool
//! sizes, runs every configured merger and writes CSV reports and traces.

mod cache;
mod config;
mod objective_spec;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;

pub use cache::{CheckpointCache, CACHE_ENV};
pub use config::{ArchConfig, PretrainConfig, ExperimentConfig, MethodSpec, PoolPlan, Relevance, SweepConfig};
pub use objective_spec::ObjectiveSpec;
pub use report::{write_report, ReportRow, REPORT_HEADER};

use crate::baselines::{task_arithmetic, ties_merge, weight_average};
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::fw::{linear_scores, run_fw};
use crate::params::ParamSet;
use crate::pool::CheckpointPool;
use crate::toy::{accuracy, CalibrationBatch, MlpArch, MultiTaskObjective, TaskSpec};

/// Everything a sweep needs once checkpoints exist on disk.
#[derive(Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub arch: MlpArch,
    pub theta0: ParamSet,
    /// Checkpoint file per task id, in pool order.
    pub checkpoints: IndexMap<String, PathBuf>,
    /// Calibration batch per evaluation task.
    pub calibration: IndexMap<String, CalibrationBatch>,
    /// Held-out test split per evaluation task.
    pub test: IndexMap<String, CalibrationBatch>,
}

impl Prepared {
    /// Validate `config`, generate task data and fine-tune (or load cached)
    /// checkpoints.
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let suite = config.load_suite()?;
        config.validate(&suite)?;
        let spec = |id: &str| -> &TaskSpec { suite.iter().find(|t| t.task_id == id).unwrap() };
        let first = spec(&config.pool.order[0]);
        let arch = MlpArch::new(first.input_dim, config.arch.hidden.clone(), first.num_classes);
        let mut theta0 = arch.init(config.arch.seed);
        if let Some(pre) = &config.arch.pretrain {
            let batches = pre
                .tasks
                .iter()
                .map(|id| spec(id).generate().map(|(train, _)| train))
                .collect::<Result<Vec<_>>>()?;
            theta0 = pretrain(theta0, MultiTaskObjective::new(arch.clone(), batches)?, pre.epochs, pre.lr)?;
        }

        let cache = CheckpointCache::from_env_or(config.output_dir.join("cache"));
        let mut checkpoints = IndexMap::new();
        for id in &config.pool.order {
            let (train, _) = spec(id).generate()?;
            let path = cache.get_or_train(&theta0, config.arch.seed, &train, config.pool.epochs, config.pool.lr)?;
            checkpoints.insert(id.clone(), path);
        }
        let mut calibration = IndexMap::new();
        let mut test = IndexMap::new();
        for id in &config.eval_tasks {
            let (train, held_out) = spec(id).generate()?;
            calibration.insert(id.clone(), train.head(config.n_calibration));
            test.insert(id.clone(), held_out);
        }
        Ok(Prepared {
            config: config.clone(),
            arch,
            theta0,
            checkpoints,
            calibration,
            test,
        })
    }

    /// Pool of the first `size` planned checkpoints.
    pub fn pool(&self, size: usize) -> Result<CheckpointPool> {
        let mut pool = CheckpointPool::new();
        for (id, path) in self.checkpoints.iter().take(size) {
            pool.push_file(id.clone(), path.clone())?;
        }
        Ok(pool)
    }

    /// Mean calibration loss over all evaluation tasks.
    pub fn objective(&self) -> Result<MultiTaskObjective> {
        MultiTaskObjective::new(self.arch.clone(), self.calibration.values().cloned().collect())
    }

    /// Test accuracy per evaluation task.
    pub fn evaluate(&self, params: &ParamSet) -> Result<IndexMap<String, f64>> {
        self.test
            .iter()
            .map(|(id, batch)| Ok((id.clone(), accuracy(params, batch)?)))
            .collect()
    }

    /// Run one method on the pool of the given size. Returns the merged
    /// model and the peak number of checkpoint buffers alive at once.
    pub fn run_method(
        &self,
        method: &MethodSpec,
        size: usize,
        trace_dir: Option<&Path>,
    ) -> Result<(ParamSet, usize)> {
        let pool = self.pool(size)?;
        pool.stats().reset();
        let merged = match method {
            MethodSpec::FwHard { config, .. } | MethodSpec::FwSoft { config, .. } => {
                let obj = self.objective()?;
                let res = run_fw(config, &pool, &obj, &self.theta0)?;
                if let Some(dir) = trace_dir {
                    res.write_trace(dir.join(format!("{}_{size}.jsonl", method.name())))?;
                }
                res.merged
            }
            MethodSpec::WeightAverage { .. } => weight_average(&pool)?,
            MethodSpec::TaskArithmetic { lambda, .. } => task_arithmetic(&self.theta0, &pool, *lambda)?,
            MethodSpec::Ties { config, .. } => ties_merge(&self.theta0, &pool, config)?,
        };
        if !merged.is_finite() {
            return Err(Error::Numerics(format!("method `{}` produced non-finite weights", method.name())));
        }
        Ok((merged, pool.stats().peak().max(1)))
    }
}

fn pretrain(mut theta: ParamSet, obj: MultiTaskObjective, epochs: usize, lr: f64) -> Result<ParamSet> {
    for epoch in 0..epochs {
        let (_, grad) = obj.loss_and_grad(&theta).map_err(|e| match e {
            Error::Numerics(m) => Error::Numerics(format!("pretraining diverged at epoch {epoch}: {m}")),
            other => other,
        })?;
        theta.axpy_inplace(-lr, &grad)?;
    }
    Ok(theta)
}

/// Result of a scaling sweep.
#[derive(Debug, Clone)]
pub struct ScalingOutcome {
    pub rows: Vec<ReportRow>,
    pub report_path: PathBuf,
}

impl ScalingOutcome {
    /// Mean accuracy of `method` at `size`, if it was run.
    pub fn mean_accuracy(&self, method: &str, size: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.pool_size == size)
            .map(|r| r.mean_accuracy)
    }

    pub fn peak_residency(&self, method: &str, size: usize) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.pool_size == size)
            .map(|r| r.peak_residency)
    }
}

/// Run every method at every sweep size and write `report.csv` plus one
/// trace per Frank-Wolfe run under `traces/`.
pub fn run_scaling(config: &ExperimentConfig) -> Result<ScalingOutcome> {
    let prep = Prepared::new(config)?;
    let out = &config.output_dir;
    let trace_dir = out.join("traces");
    std::fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;

    let mut rows = Vec::new();
    for method in &config.methods {
        for &size in &config.sweep.sizes {
            log::info!("{} at pool size {size}", method.name());
            let start = Instant::now();
            let (merged, peak) = prep.run_method(method, size, Some(&trace_dir))?;
            let wall_ms = config.record_timing.then(|| start.elapsed().as_millis());
            let acc = prep.evaluate(&merged)?;
            let mean = acc.values().sum::<f64>() / acc.len() as f64;
            for (task, a) in acc {
                rows.push(ReportRow {
                    method: method.name(),
                    pool_size: size,
                    relevance: config.sweep.relevance,
                    task_id: task,
                    accuracy: a,
                    mean_accuracy: mean,
                    wall_ms,
                    peak_residency: peak,
                });
            }
        }
    }
    let report_path = out.join("report.csv");
    write_report(&report_path, &rows)?;
    Ok(ScalingOutcome { rows, report_path })
}

/// Linear scores of every planned checkpoint under each evaluation task's
/// gradient at the initial model.
#[derive(Debug, Clone)]
pub struct RelevanceOutcome {
    pub checkpoints: Vec<String>,
    /// One row per evaluation task, one column per checkpoint.
    pub scores: IndexMap<String, Vec<f64>>,
    pub matrix_path: PathBuf,
}

impl RelevanceOutcome {
    /// Index of the lowest-scoring checkpoint for `task` (lowest index on ties).
    pub fn argmin(&self, task: &str) -> Option<usize> {
        let row = self.scores.get(task)?;
        let mut best = 0;
        for (i, s) in row.iter().enumerate() {
            if *s < row[best] {
                best = i;
            }
        }
        Some(best)
    }

    /// Fraction of evaluation tasks whose own checkpoint scores lowest. With
    /// a single checkpoint every task counts as selecting it.
    pub fn own_minimal_fraction(&self) -> f64 {
        let hits = self
            .scores
            .keys()
            .filter(|task| {
                let best = self.argmin(task).unwrap();
                self.checkpoints.len() == 1 || self.checkpoints[best] == **task
            })
            .count();
        hits as f64 / self.scores.len() as f64
    }
}

/// Compute the relevance matrix over the full planned pool and write it to
/// `relevance.csv`.
pub fn run_relevance(config: &ExperimentConfig) -> Result<RelevanceOutcome> {
    let prep = Prepared::new(config)?;
    let pool = prep.pool(prep.checkpoints.len())?;
    let mut scores = IndexMap::new();
    for (task, batch) in &prep.calibration {
        let (_, grad) = prep.arch.batch_loss_and_grad(&prep.theta0, batch)?;
        let row: Vec<f64> = linear_scores(&pool, &grad)?.into_iter().map(|(_, s)| s).collect();
        scores.insert(task.clone(), row);
    }
    let checkpoints: Vec<String> = pool.ids().map(str::to_string).collect();
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let matrix_path = out.join("relevance.csv");
    let mut text = format!("task_id,{}\n", checkpoints.join(","));
    for (task, row) in &scores {
        let cells: Vec<String> = row.iter().map(|s| format!("{s:.9e}")).collect();
        text.push_str(&format!("{task},{}\n", cells.join(",")));
    }
    std::fs::write(&matrix_path, text).map_err(|e| Error::io(&matrix_path, e))?;
    Ok(RelevanceOutcome {
        checkpoints,
        scores,
        matrix_path,
    })
}
