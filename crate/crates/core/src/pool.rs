//! Checkpoint pools with streaming, instrumented access.
//!
//! Entries are either checkpoint files, loaded on every access, or shared
//! in-memory sets. Every [`Checkout`] is counted against the pool's
//! [`ResidencyStats`], which is how the constant-memory contract of the merge
//! loop is measured.

use std::ops::Deref;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::checkpoint::{load_checkpoint, read_schema};
use crate::error::{Error, Result};
use crate::params::{ParamSet, Schema};

/// File extension used when scanning a pool directory.
pub const CHECKPOINT_EXT: &str = "fwck";

#[derive(Debug, Clone)]
pub enum Source {
    File(PathBuf),
    Memory(Arc<ParamSet>),
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub id: String,
    pub source: Source,
}

/// Counters shared by a pool and all of its clones.
#[derive(Debug, Default)]
pub struct ResidencyStats {
    loads: AtomicUsize,
    resident: AtomicUsize,
    peak: AtomicUsize,
}

impl ResidencyStats {
    /// Total number of checkouts since the last reset.
    pub fn loads(&self) -> usize {
        self.loads.load(Ordering::SeqCst)
    }

    /// Checkpoint-sized buffers currently alive.
    pub fn resident(&self) -> usize {
        self.resident.load(Ordering::SeqCst)
    }

    /// Largest value `resident` reached since the last reset.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.loads.store(0, Ordering::SeqCst);
        self.peak.store(self.resident(), Ordering::SeqCst);
    }

    /// Register one checkpoint-sized buffer for as long as the guard lives.
    pub fn acquire(self: &Arc<Self>) -> ResidencyGuard {
        let now = self.resident.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        ResidencyGuard(Arc::clone(self))
    }
}

#[derive(Debug)]
pub struct ResidencyGuard(Arc<ResidencyStats>);

impl Drop for ResidencyGuard {
    fn drop(&mut self) {
        self.0.resident.fetch_sub(1, Ordering::SeqCst);
    }
}

/// A pool entry held in memory. Dropping it releases its residency slot.
#[derive(Debug)]
pub struct Checkout {
    params: Arc<ParamSet>,
    _guard: ResidencyGuard,
}

impl Checkout {
    pub fn into_params(self) -> ParamSet {
        Arc::try_unwrap(self.params).unwrap_or_else(|shared| (*shared).clone())
    }
}

impl Deref for Checkout {
    type Target = ParamSet;
    fn deref(&self) -> &ParamSet {
        &self.params
    }
}

/// Ordered list of vertices for merging.
#[derive(Debug, Clone, Default)]
pub struct CheckpointPool {
    entries: Vec<PoolEntry>,
    schema: Option<Schema>,
    stats: Arc<ResidencyStats>,
}

impl CheckpointPool {
    pub fn new() -> Self {
        CheckpointPool::default()
    }

    /// Every `*.fwck` file in `dir`, ordered by file name; ids are file stems.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for entry in read {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some(CHECKPOINT_EXT) {
                files.push(path);
            }
        }
        files.sort();
        let mut pool = CheckpointPool::new();
        for path in files {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Config(format!("non UTF-8 file name {}", path.display())))?
                .to_string();
            pool.push_file(id, path)?;
        }
        Ok(pool)
    }

    fn push(&mut self, id: String, source: Source) -> Result<()> {
        if self.entries.iter().any(|e| e.id == id) {
            return Err(Error::Config(format!("duplicate pool id `{id}`")));
        }
        self.entries.push(PoolEntry { id, source });
        self.schema = None;
        Ok(())
    }

    pub fn push_file(&mut self, id: impl Into<String>, path: impl Into<PathBuf>) -> Result<()> {
        self.push(id.into(), Source::File(path.into()))
    }

    pub fn push_memory(&mut self, id: impl Into<String>, params: ParamSet) -> Result<()> {
        self.push(id.into(), Source::Memory(Arc::new(params)))
    }

    pub fn push_shared(&mut self, id: impl Into<String>, params: Arc<ParamSet>) -> Result<()> {
        self.push(id.into(), Source::Memory(params))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn id(&self, index: usize) -> &str {
        &self.entries[index].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn stats(&self) -> &Arc<ResidencyStats> {
        &self.stats
    }

    /// Bring entry `index` into memory. File entries are re-read every time.
    pub fn load(&self, index: usize) -> Result<Checkout> {
        let entry = self
            .entries
            .get(index)
            .ok_or_else(|| Error::Dimension(format!("pool index {index} out of range")))?;
        let guard = self.stats.acquire();
        self.stats.loads.fetch_add(1, Ordering::SeqCst);
        let params = match &entry.source {
            Source::File(path) => Arc::new(load_checkpoint(path)?),
            Source::Memory(p) => Arc::clone(p),
        };
        Ok(Checkout {
            params,
            _guard: guard,
        })
    }

    fn entry_schema(entry: &PoolEntry) -> Result<Schema> {
        match &entry.source {
            Source::File(path) => read_schema(path),
            Source::Memory(p) => Ok(p.schema()),
        }
    }

    /// Verify all entries share the first entry's schema and cache it.
    pub fn check_schema(&mut self) -> Result<&Schema> {
        if self.schema.is_none() {
            let first = self.entries.first().ok_or(Error::EmptyPool)?;
            let reference = Self::entry_schema(first)?;
            for entry in &self.entries[1..] {
                if let Some(diff) = reference.diff(&Self::entry_schema(entry)?) {
                    return Err(Error::Schema(format!("pool entry `{}`: {diff}", entry.id)));
                }
            }
            self.schema = Some(reference);
        }
        Ok(self.schema.as_ref().unwrap())
    }

    /// The cached schema, if `check_schema` has succeeded since the last push.
    pub fn schema(&self) -> Option<&Schema> {
        self.schema.as_ref()
    }
}
