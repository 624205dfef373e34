use std::fmt::Write as _;
use std::path::Path;

use super::config::Relevance;
use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "method,pool_size,relevance,task_id,accuracy,mean_accuracy,wall_ms,peak_residency";

/// One evaluated task of one method at one pool size.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub pool_size: usize,
    pub relevance: Relevance,
    pub task_id: String,
    pub accuracy: f64,
    pub mean_accuracy: f64,
    /// Left empty unless timing was requested.
    pub wall_ms: Option<u128>,
    pub peak_residency: usize,
}

/// Write rows in (method, size) order as given; accuracies with six decimals.
pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut text = String::from(REPORT_HEADER);
    text.push('\n');
    for r in rows {
        let wall = r.wall_ms.map(|w| w.to_string()).unwrap_or_default();
        writeln!(
            text,
            "{},{},{},{},{:.6},{:.6},{},{}",
            r.method,
            r.pool_size,
            r.relevance.as_str(),
            r.task_id,
            r.accuracy,
            r.mean_accuracy,
            wall,
            r.peak_residency
        )
        .unwrap();
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
