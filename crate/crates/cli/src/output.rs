//! Plot-ready CSV logs and the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use apg_core::trainer::{EpisodeRecord, IterationRecord};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Bumped whenever a CSV column or manifest field changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const ITERATION_COLUMNS: [&str; 6] = ["i", "L1", "L2", "grad_norm_sq", "alpha_w", "alpha_theta"];
pub const EPISODE_COLUMNS: [&str; 5] = ["episode", "steps", "sum_l", "disc_sum_c", "wall_ms"];

pub fn artifact_version() -> String {
    format!("apg {} schema {SCHEMA_VERSION}", env!("CARGO_PKG_VERSION"))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn write_iterations(path: &Path, records: &[IterationRecord]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(ITERATION_COLUMNS)?;
    for r in records {
        w.write_record([
            r.i.to_string(),
            r.l1.to_string(),
            r.l2.to_string(),
            r.grad_norm_sq.to_string(),
            r.alpha_w.to_string(),
            r.alpha_theta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_episodes(path: &Path, records: &[EpisodeRecord]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(EPISODE_COLUMNS)?;
    for r in records {
        w.write_record([
            r.episode.to_string(),
            r.steps.to_string(),
            r.sum_l.to_string(),
            r.disc_sum_c.to_string(),
            r.wall_ms.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One numeric column of a CSV with a header row.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Failed(format!("cannot read {}: {e}", path.display())))?;
    let idx = r
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::Input(format!("{} has no `{column}` column", path.display())))?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(idx).unwrap_or("");
        let v = field.parse::<f64>().map_err(|_| {
            CliError::Input(format!("{}: row {}: `{field}` is not a number", path.display(), row + 1))
        })?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    /// SHA-256 of the canonical config JSON.
    pub config_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    /// Artifact name to path relative to the run directory.
    pub outputs: BTreeMap<String, String>,
    /// The config as executed, defaults filled in.
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
