use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::toy::{finetune, CalibrationBatch};

/// Environment variable that overrides the checkpoint cache directory.
pub const CACHE_ENV: &str = "FW_MERGE_CACHE";

/// Fine-tuned checkpoints on disk, keyed by task, seed and epoch count.
#[derive(Debug, Clone)]
pub struct CheckpointCache {
    dir: PathBuf,
}

impl CheckpointCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CheckpointCache { dir: dir.into() }
    }

    /// `$FW_MERGE_CACHE` if set, otherwise `default`.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => CheckpointCache::new(dir),
            _ => CheckpointCache::new(default),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, task: &str, seed: u64, epochs: usize) -> PathBuf {
        self.dir.join(format!("{task}_{seed}_{epochs}.fwck"))
    }

    fn stamp_path(&self, task: &str, seed: u64, epochs: usize) -> PathBuf {
        self.dir.join(format!("{task}_{seed}_{epochs}.json"))
    }

    /// Return the cached checkpoint for `task`, fine-tuning and storing it if
    /// missing. Next to each checkpoint a small JSON stamp records the base
    /// model hash, the learning rate and the task data hash; a cached file
    /// that fails to decode or whose stamp disagrees is regenerated with a
    /// warning.
    pub fn get_or_train(
        &self,
        base: &ParamSet,
        seed: u64,
        data: &CalibrationBatch,
        epochs: usize,
        lr: f64,
    ) -> Result<PathBuf> {
        let path = self.path(&data.task_id, seed, epochs);
        let stamp_path = self.stamp_path(&data.task_id, seed, epochs);
        let stamp = serde_json::json!({
            "base": hex(&base.content_hash()),
            "lr": lr,
            "data": data_hash(data),
        });
        if path.exists() {
            let cached_stamp = std::fs::read_to_string(&stamp_path)
                .ok()
                .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok());
            if cached_stamp.as_ref() != Some(&stamp) {
                log::warn!("regenerating cached checkpoint {}: stale or missing stamp", path.display());
            } else {
                match load_checkpoint(&path).and_then(|p| p.check_same_schema(base)) {
                    Ok(()) => return Ok(path),
                    Err(e) => log::warn!("regenerating cached checkpoint {}: {e}", path.display()),
                }
            }
        }
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let tuned = finetune(base, data, epochs, lr)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        save_checkpoint(&tuned, &tmp)?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        std::fs::write(&stamp_path, stamp.to_string()).map_err(|e| Error::io(&stamp_path, e))?;
        Ok(path)
    }
}

fn data_hash(data: &CalibrationBatch) -> String {
    let mut h = Sha256::new();
    for x in data.inputs() {
        h.update(x.to_bits().to_le_bytes());
    }
    for &y in data.labels() {
        h.update((y as u64).to_le_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
