//! Append-only JSON-lines archive of runs.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::run::{AuditSummary, Records, RunOutput};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARCHIVE_FILE: &str = "archive.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("archive i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("archive {path} line {line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("archive {path} line {line}: config hash {stored} does not match embedded config ({actual})")]
    HashMismatch { path: PathBuf, line: usize, stored: String, actual: String },
    #[error("archive {}: no entry matches `{}`", .1.display(), .0)]
    NotFound(String, PathBuf),
    #[error("archive {0}: empty")]
    Empty(PathBuf),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub schema_version: u32,
    pub run_id: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub records: Records,
    pub audit: AuditSummary,
}

impl ArchiveEntry {
    pub fn new(config: &RunConfig, output: RunOutput) -> Self {
        let now = chrono::Utc::now();
        let hash = config.hash();
        Self {
            schema_version: SCHEMA_VERSION,
            run_id: format!("{}-{}", now.format("%Y%m%dT%H%M%S%.6fZ"), &hash[..12]),
            timestamp: now.to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            config_hash: hash,
            config: config.clone(),
            records: output.records,
            audit: output.audit,
        }
    }
}

pub fn archive_path(dir: &Path) -> PathBuf {
    dir.join(ARCHIVE_FILE)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Append one entry as a single line.
pub fn append(path: &Path, entry: &ArchiveEntry) -> Result<(), ArchiveError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io(parent))?;
    }
    let mut line = serde_json::to_string(entry).map_err(|source| ArchiveError::Parse {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io(path))?;
    file.write_all(line.as_bytes()).map_err(io(path))
}

/// Every entry, each checked against its embedded config.
pub fn load(path: &Path) -> Result<Vec<ArchiveEntry>, ArchiveError> {
    let file = std::fs::File::open(path).map_err(io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ArchiveEntry = serde_json::from_str(&line).map_err(|source| ArchiveError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        let actual = entry.config.hash();
        if actual != entry.config_hash {
            return Err(ArchiveError::HashMismatch {
                path: path.to_path_buf(),
                line: i + 1,
                stored: entry.config_hash,
                actual,
            });
        }
        out.push(entry);
    }
    Ok(out)
}

/// The entry with `run_id`, or the most recent one.
pub fn select(path: &Path, run_id: Option<&str>) -> Result<ArchiveEntry, ArchiveError> {
    let entries = load(path)?;
    match run_id {
        Some(id) => entries
            .into_iter()
            .find(|e| e.run_id == id)
            .ok_or_else(|| ArchiveError::NotFound(id.to_string(), path.to_path_buf())),
        None => entries.into_iter().last().ok_or_else(|| ArchiveError::Empty(path.to_path_buf())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Experiment, RunConfig};
    use crate::run::run;

    fn entry() -> ArchiveEntry {
        let mut c = RunConfig::new(Experiment::Magnet).with_defaults();
        c.grids.field = vec![0.0, 0.5];
        let out = run(&c).unwrap();
        ArchiveEntry::new(&c, out)
    }

    #[test]
    fn append_only_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = archive_path(dir.path());
        let (a, b) = (entry(), entry());
        append(&path, &a).unwrap();
        append(&path, &b).unwrap();
        let all = load(&path).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].config_hash, a.config_hash);
        assert_eq!(select(&path, None).unwrap().run_id, b.run_id);
        assert_eq!(select(&path, Some(&a.run_id)).unwrap().run_id, a.run_id);
        assert!(select(&path, Some("missing")).is_err());
    }

    #[test]
    fn tampered_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = archive_path(dir.path());
        let mut e = entry();
        e.config.seed += 1;
        append(&path, &e).unwrap();
        assert!(matches!(load(&path), Err(ArchiveError::HashMismatch { .. })));
    }
}
