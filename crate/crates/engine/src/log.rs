//! The commit log: one immutable, line-oriented JSON file per table version.
//!
//! Commit files are the single source of truth for every layout. A version is
//! claimed by atomically creating `%020d.commit`; whoever loses the race must
//! re-read and retry.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::storage::{FileClass, Io};
use crate::table::{meta_dir, DataFile, DeltaFile, TableDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommitKind {
    Create,
    Append,
    Merge,
    Optimize,
    Vacuum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Schema(TableDescriptor),
    AddFile(DataFile),
    RemoveFile { file_id: String },
    AddDelta(DeltaFile),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitEntry {
    pub version: u64,
    pub parent_version: Option<u64>,
    pub commit_kind: CommitKind,
    /// Set by VACUUM: versions below this are no longer queryable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retain_from: Option<u64>,
    #[serde(skip)]
    pub actions: Vec<Action>,
}

#[derive(Serialize, Deserialize)]
struct CommitHeader {
    version: u64,
    parent_version: Option<u64>,
    commit_kind: CommitKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    retain_from: Option<u64>,
}

pub(crate) fn commit_path(root: &Path, table: &str, version: u64) -> PathBuf {
    meta_dir(root, table).join(format!("{version:020}.commit"))
}

pub(crate) fn parse_versioned(name: &str, suffix: &str) -> Option<u64> {
    let stem = name.strip_suffix(suffix)?;
    if stem.len() == 20 && stem.bytes().all(|b| b.is_ascii_digit()) {
        stem.parse().ok()
    } else {
        None
    }
}

impl CommitEntry {
    pub fn encode(&self) -> String {
        let header = CommitHeader {
            version: self.version,
            parent_version: self.parent_version,
            commit_kind: self.commit_kind,
            retain_from: self.retain_from,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for action in &self.actions {
            out.push_str(&serde_json::to_string(action).expect("action serializes"));
            out.push('\n');
        }
        out
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| EngineError::format(path, e))?;
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let header: CommitHeader = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| EngineError::format(path, "empty commit"))?,
        )
        .map_err(|e| EngineError::format(path, e))?;
        let actions = lines
            .map(|l| serde_json::from_str(l).map_err(|e| EngineError::format(path, e)))
            .collect::<Result<Vec<Action>>>()?;
        Ok(Self {
            version: header.version,
            parent_version: header.parent_version,
            commit_kind: header.commit_kind,
            retain_from: header.retain_from,
            actions,
        })
    }
}

/// Claims `entry.version` with an atomic create-if-absent. Returns `false` if
/// another writer already owns the version.
pub(crate) fn try_publish(
    io: &mut Io,
    root: &Path,
    table: &str,
    entry: &CommitEntry,
) -> Result<bool> {
    io.publish_if_absent(
        &commit_path(root, table, entry.version),
        entry.encode().as_bytes(),
    )
}

pub(crate) fn read_commit(
    io: &mut Io,
    root: &Path,
    table: &str,
    version: u64,
) -> Result<Option<CommitEntry>> {
    let path = commit_path(root, table, version);
    match io.read_opt(&path, FileClass::Metadata)? {
        Some(bytes) => CommitEntry::decode(&path, &bytes).map(Some),
        None => Ok(None),
    }
}

/// One immutable version of a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u64,
    pub descriptor: TableDescriptor,
    pub live_files: BTreeMap<String, DataFile>,
    pub pending_deltas: BTreeMap<String, Vec<DeltaFile>>,
    /// Oldest version still queryable as of this snapshot.
    pub retain_from: u64,
}

impl Snapshot {
    /// Builds the snapshot produced by applying `entry` on top of `parent`.
    pub fn apply(parent: Option<&Snapshot>, entry: &CommitEntry) -> Result<Snapshot> {
        let bad = |msg: String| EngineError::Format {
            path: PathBuf::from(format!("{:020}.commit", entry.version)),
            message: msg,
        };
        let mut snap = match parent {
            Some(p) => {
                if entry.parent_version != Some(p.version) || entry.version != p.version + 1 {
                    return Err(bad(format!(
                        "commit {} does not follow version {}",
                        entry.version, p.version
                    )));
                }
                p.clone()
            }
            None => {
                let descriptor = entry
                    .actions
                    .iter()
                    .find_map(|a| match a {
                        Action::Schema(d) => Some(d.clone()),
                        _ => None,
                    })
                    .ok_or_else(|| bad("first commit carries no schema".into()))?;
                if entry.version != 0 || entry.parent_version.is_some() {
                    return Err(bad("first commit must be version 0".into()));
                }
                Snapshot {
                    version: 0,
                    descriptor,
                    live_files: BTreeMap::new(),
                    pending_deltas: BTreeMap::new(),
                    retain_from: 0,
                }
            }
        };
        snap.version = entry.version;
        for action in &entry.actions {
            match action {
                Action::Schema(d) => snap.descriptor = d.clone(),
                Action::AddFile(f) => {
                    let mut f = f.clone();
                    f.created_by_version = entry.version;
                    snap.live_files.insert(f.file_id.clone(), f);
                }
                Action::RemoveFile { file_id } => {
                    if snap.live_files.remove(file_id).is_none() {
                        return Err(bad(format!("removes non-live file {file_id}")));
                    }
                    snap.pending_deltas.remove(file_id);
                }
                Action::AddDelta(d) => {
                    if !snap.live_files.contains_key(&d.base_file_id) {
                        return Err(bad(format!("delta on non-live base {}", d.base_file_id)));
                    }
                    let mut d = d.clone();
                    d.created_by_version = entry.version;
                    snap.pending_deltas
                        .entry(d.base_file_id.clone())
                        .or_default()
                        .push(d);
                }
            }
        }
        if let Some(r) = entry.retain_from {
            snap.retain_from = snap.retain_from.max(r);
        }
        Ok(snap)
    }

    pub fn pending_delta_count(&self) -> usize {
        self.pending_deltas.values().map(Vec::len).sum()
    }

    pub fn total_rows_upper_bound(&self) -> u64 {
        self.live_files.values().map(|f| f.row_count).sum()
    }

    /// Every physical file (data and delta) this snapshot references.
    pub fn referenced_files(&self) -> impl Iterator<Item = String> + '_ {
        self.live_files.keys().map(|id| format!("{id}.data")).chain(
            self.pending_deltas
                .values()
                .flatten()
                .map(|d| format!("{}.delta", d.file_id)),
        )
    }
}
