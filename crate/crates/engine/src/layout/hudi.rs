use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{not_found, sort_deltas, Listing};
use crate::error::{EngineError, Result};
use crate::log::{read_commit, Action, Snapshot};
use crate::storage::{FileClass, Io};
use crate::table::{meta_dir, DataFile, DeltaFile, TableDescriptor};

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    version: u64,
    descriptor: TableDescriptor,
    /// (version, retain_from) pairs, one per VACUUM, in version order.
    retention: Vec<(u64, u64)>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum IndexRecord {
    File {
        file: DataFile,
        added_in: u64,
        removed_in: Option<u64>,
    },
    Delta {
        delta: DeltaFile,
        added_in: u64,
        removed_in: Option<u64>,
    },
}

impl IndexRecord {
    fn live_at(&self, v: u64) -> bool {
        let (added, removed) = match self {
            IndexRecord::File {
                added_in,
                removed_in,
                ..
            } => (*added_in, *removed_in),
            IndexRecord::Delta {
                added_in,
                removed_in,
                ..
            } => (*added_in, *removed_in),
        };
        added <= v && removed.is_none_or(|r| r > v)
    }

    fn removed_in(&self) -> Option<u64> {
        match self {
            IndexRecord::File { removed_in, .. } | IndexRecord::Delta { removed_in, .. } => {
                *removed_in
            }
        }
    }
}

/// The metadata index: file-level live intervals for every retained version.
struct Index {
    header: IndexHeader,
    records: Vec<IndexRecord>,
}

impl Index {
    fn retain_from_at(&self, v: u64) -> u64 {
        self.header
            .retention
            .iter()
            .filter(|(at, _)| *at <= v)
            .map(|(_, r)| *r)
            .max()
            .unwrap_or(0)
    }

    fn retain_from(&self) -> u64 {
        self.retain_from_at(self.header.version)
    }

    fn apply(&mut self, version: u64, actions: &[Action], retain: Option<u64>) {
        for action in actions {
            match action {
                Action::Schema(d) => self.header.descriptor = d.clone(),
                Action::AddFile(f) => {
                    let mut file = f.clone();
                    file.created_by_version = version;
                    self.records.push(IndexRecord::File {
                        file,
                        added_in: version,
                        removed_in: None,
                    });
                }
                Action::AddDelta(d) => {
                    let mut delta = d.clone();
                    delta.created_by_version = version;
                    self.records.push(IndexRecord::Delta {
                        delta,
                        added_in: version,
                        removed_in: None,
                    });
                }
                Action::RemoveFile { file_id } => {
                    for rec in &mut self.records {
                        match rec {
                            IndexRecord::File {
                                file, removed_in, ..
                            } if file.file_id == *file_id && removed_in.is_none() => {
                                *removed_in = Some(version)
                            }
                            IndexRecord::Delta {
                                delta, removed_in, ..
                            } if delta.base_file_id == *file_id && removed_in.is_none() => {
                                *removed_in = Some(version)
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        self.header.version = version;
        if let Some(r) = retain {
            let r = r.max(self.retain_from());
            self.header.retention.push((version, r));
            // Records invisible to every retained version are dropped.
            self.records
                .retain(|rec| rec.removed_in().is_none_or(|x| x > r));
        }
    }

    fn snapshot(&self, table: &str, v: u64) -> Result<Snapshot> {
        if v > self.header.version || v < self.retain_from() {
            return Err(not_found(table, v));
        }
        let mut snap = Snapshot {
            version: v,
            descriptor: self.header.descriptor.clone(),
            live_files: BTreeMap::new(),
            pending_deltas: BTreeMap::new(),
            retain_from: self.retain_from_at(v),
        };
        for rec in self.records.iter().filter(|r| r.live_at(v)) {
            match rec {
                IndexRecord::File { file, .. } => {
                    snap.live_files.insert(file.file_id.clone(), file.clone());
                }
                IndexRecord::Delta { delta, .. } => snap
                    .pending_deltas
                    .entry(delta.base_file_id.clone())
                    .or_default()
                    .push(delta.clone()),
            }
        }
        sort_deltas(&mut snap);
        Ok(snap)
    }

    fn encode(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| EngineError::format(path, e))?;
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let header: IndexHeader = serde_json::from_str(lines.next().unwrap_or_default())
            .map_err(|e| EngineError::format(path, e))?;
        let records = lines
            .map(|l| serde_json::from_str(l).map_err(|e| EngineError::format(path, e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { header, records })
    }
}

fn index_path(root: &Path, table: &str) -> PathBuf {
    meta_dir(root, table).join("index.meta")
}

fn timeline_path(root: &Path, table: &str, version: u64) -> PathBuf {
    meta_dir(root, table).join(format!("{version:020}.timeline"))
}

/// Loads the index and brings it up to `upto` from the commit log if a
/// publisher has fallen behind. Returns whether it was advanced.
fn load_index(io: &mut Io, root: &Path, table: &str, upto: u64) -> Result<(Index, bool)> {
    let path = index_path(root, table);
    let mut index = match io.read_opt(&path, FileClass::Metadata)? {
        Some(bytes) => Some(Index::decode(&path, &bytes)?),
        None => None,
    };
    let start = index.as_ref().map_or(0, |i| i.header.version + 1);
    let advanced = start <= upto;
    for v in start..=upto {
        let entry = read_commit(io, root, table, v)?.ok_or_else(|| not_found(table, v))?;
        match index.as_mut() {
            Some(idx) => idx.apply(v, &entry.actions, entry.retain_from),
            None => {
                let descriptor = entry
                    .actions
                    .iter()
                    .find_map(|a| match a {
                        Action::Schema(d) => Some(d.clone()),
                        _ => None,
                    })
                    .ok_or_else(|| EngineError::format(&path, "first commit has no schema"))?;
                let mut idx = Index {
                    header: IndexHeader {
                        version: 0,
                        descriptor,
                        retention: Vec::new(),
                    },
                    records: Vec::new(),
                };
                idx.apply(v, &entry.actions, entry.retain_from);
                index = Some(idx);
            }
        }
        io.write_replace(
            &timeline_path(root, table, v),
            format!("{{\"version\":{v}}}").as_bytes(),
        )?;
    }
    let index = index.ok_or_else(|| EngineError::UnknownTable(table.to_string()))?;
    Ok((index, advanced))
}

pub(super) fn read(
    io: &mut Io,
    root: &Path,
    table: &str,
    listing: &Listing,
    asof: Option<u64>,
) -> Result<Snapshot> {
    let latest = listing.latest_commit.expect("caller checked");
    let (index, advanced) = load_index(io, root, table, latest)?;
    if advanced {
        io.write_replace(&index_path(root, table), index.encode().as_bytes())?;
    }
    index.snapshot(table, asof.unwrap_or(index.header.version))
}

pub(super) fn publish(io: &mut Io, root: &Path, table: &str, version: u64) -> Result<()> {
    let (index, advanced) = load_index(io, root, table, version)?;
    if advanced {
        io.write_replace(&index_path(root, table), index.encode().as_bytes())?;
    }
    Ok(())
}
