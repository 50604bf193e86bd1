use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{not_found, sort_deltas, Listing};
use crate::error::{EngineError, Result};
use crate::log::{read_commit, Action, Snapshot};
use crate::storage::{FileClass, Io};
use crate::table::{meta_dir, DataFile, DeltaFile, TableDescriptor};

#[derive(Serialize, Deserialize)]
struct TopMetadata {
    current_version: u64,
    retain_from: u64,
    descriptor: TableDescriptor,
    /// Retained snapshot version -> manifest list file name.
    snapshots: BTreeMap<u64, String>,
}

#[derive(Serialize, Deserialize)]
struct ManifestList {
    version: u64,
    retain_from: u64,
    manifests: Vec<String>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ManifestEntry {
    Data(DataFile),
    Delta(DeltaFile),
}

impl ManifestEntry {
    fn base_id(&self) -> &str {
        match self {
            ManifestEntry::Data(f) => &f.file_id,
            ManifestEntry::Delta(d) => &d.base_file_id,
        }
    }
}

fn top_path(root: &Path, table: &str, version: u64) -> PathBuf {
    meta_dir(root, table).join(format!("v{version}.metadata"))
}

fn list_name(version: u64) -> String {
    format!("snap-{version}.manifestlist")
}

fn parse_top(name: &str) -> Option<u64> {
    name.strip_prefix('v')?
        .strip_suffix(".metadata")?
        .parse()
        .ok()
}

fn read_json<T: for<'de> Deserialize<'de>>(io: &mut Io, path: &Path) -> Result<T> {
    let bytes = io.read(path, FileClass::Metadata)?;
    serde_json::from_slice(&bytes).map_err(|e| EngineError::format(path, e))
}

fn read_manifest(io: &mut Io, path: &Path) -> Result<Vec<ManifestEntry>> {
    let bytes = io.read(path, FileClass::Metadata)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| EngineError::format(path, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| EngineError::format(path, e)))
        .collect()
}

fn encode_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("entry serializes"));
        out.push('\n');
    }
    out
}

/// Loads the manifests of snapshot `version` as (name, entries) pairs.
fn load_tree(
    io: &mut Io,
    root: &Path,
    table: &str,
    list: &ManifestList,
) -> Result<Vec<(String, Vec<ManifestEntry>)>> {
    let dir = meta_dir(root, table);
    list.manifests
        .iter()
        .map(|name| Ok((name.clone(), read_manifest(io, &dir.join(name))?)))
        .collect()
}

pub(super) fn read(
    io: &mut Io,
    root: &Path,
    table: &str,
    listing: &Listing,
    asof: Option<u64>,
) -> Result<Snapshot> {
    let latest_commit = listing.latest_commit.expect("caller checked");
    let latest_top = listing.names.iter().filter_map(|n| parse_top(n)).max();
    if latest_top.is_none_or(|m| m < latest_commit) {
        // A writer claimed a version but has not finished publishing it.
        publish(io, root, table, latest_commit)?;
    }
    let top: TopMetadata = read_json(io, &top_path(root, table, latest_commit))?;
    let target = asof.unwrap_or(top.current_version);
    let list_file = top
        .snapshots
        .get(&target)
        .ok_or_else(|| not_found(table, target))?;
    let list: ManifestList = read_json(io, &meta_dir(root, table).join(list_file))?;
    let tree = load_tree(io, root, table, &list)?;
    let mut snap = Snapshot {
        version: target,
        descriptor: top.descriptor,
        live_files: BTreeMap::new(),
        pending_deltas: BTreeMap::new(),
        retain_from: list.retain_from,
    };
    for entry in tree.into_iter().flat_map(|(_, entries)| entries) {
        match entry {
            ManifestEntry::Data(f) => {
                snap.live_files.insert(f.file_id.clone(), f);
            }
            ManifestEntry::Delta(d) => snap
                .pending_deltas
                .entry(d.base_file_id.clone())
                .or_default()
                .push(d),
        }
    }
    sort_deltas(&mut snap);
    Ok(snap)
}

/// Materializes metadata for `version`, first catching up any earlier
/// versions whose metadata is missing. Output names are deterministic, so
/// racing publishers write identical bytes.
pub(super) fn publish(io: &mut Io, root: &Path, table: &str, version: u64) -> Result<()> {
    let dir = meta_dir(root, table);
    let prev = if version == 0 {
        None
    } else {
        let prev_path = top_path(root, table, version - 1);
        if !prev_path.exists() {
            publish(io, root, table, version - 1)?;
        }
        let top: TopMetadata = read_json(io, &prev_path)?;
        let list_file = top
            .snapshots
            .get(&(version - 1))
            .cloned()
            .ok_or_else(|| not_found(table, version - 1))?;
        let list: ManifestList = read_json(io, &dir.join(list_file))?;
        let tree = load_tree(io, root, table, &list)?;
        Some((top, list, tree))
    };
    let entry = read_commit(io, root, table, version)?.ok_or_else(|| not_found(table, version))?;

    let removed: BTreeSet<&str> = entry
        .actions
        .iter()
        .filter_map(|a| match a {
            Action::RemoveFile { file_id } => Some(file_id.as_str()),
            _ => None,
        })
        .collect();
    let mut added = Vec::new();
    let mut descriptor = None;
    for action in &entry.actions {
        match action {
            Action::AddFile(f) => {
                let mut f = f.clone();
                f.created_by_version = version;
                added.push(ManifestEntry::Data(f));
            }
            Action::AddDelta(d) => {
                let mut d = d.clone();
                d.created_by_version = version;
                added.push(ManifestEntry::Delta(d));
            }
            Action::Schema(d) => descriptor = Some(d.clone()),
            Action::RemoveFile { .. } => {}
        }
    }

    let mut manifests = Vec::new();
    let (mut snapshots, prev_retain, prev_descriptor) = match prev {
        Some((top, list, tree)) => {
            for (k, (name, entries)) in tree.into_iter().enumerate() {
                if entries.iter().any(|e| removed.contains(e.base_id())) {
                    let survivors: Vec<ManifestEntry> = entries
                        .into_iter()
                        .filter(|e| !removed.contains(e.base_id()))
                        .collect();
                    if !survivors.is_empty() {
                        let new_name = format!("manifest-{version}-{k}.mf");
                        io.write_replace(
                            &dir.join(&new_name),
                            encode_manifest(&survivors).as_bytes(),
                        )?;
                        manifests.push(new_name);
                    }
                } else {
                    manifests.push(name);
                }
            }
            (top.snapshots, list.retain_from, Some(top.descriptor))
        }
        None => (BTreeMap::new(), 0, None),
    };
    if !added.is_empty() {
        let name = format!("manifest-{version}-a.mf");
        io.write_replace(&dir.join(&name), encode_manifest(&added).as_bytes())?;
        manifests.push(name);
    }
    let retain_from = entry
        .retain_from
        .map_or(prev_retain, |r| r.max(prev_retain));
    let list = ManifestList {
        version,
        retain_from,
        manifests,
    };
    io.write_replace(
        &dir.join(list_name(version)),
        serde_json::to_string(&list)
            .expect("list serializes")
            .as_bytes(),
    )?;
    snapshots.insert(version, list_name(version));
    snapshots.retain(|&v, _| v >= retain_from);
    let descriptor = descriptor
        .or(prev_descriptor)
        .ok_or_else(|| EngineError::format(top_path(root, table, version), "no schema"))?;
    let top = TopMetadata {
        current_version: version,
        retain_from,
        descriptor,
        snapshots,
    };
    io.write_replace(
        &top_path(root, table, version),
        serde_json::to_string(&top)
            .expect("top serializes")
            .as_bytes(),
    )
}

/// Number of manifests the snapshot at `version` references. Test helper
/// that reads the tree directly, without counters.
pub fn manifest_count(root: &Path, table: &str, version: u64) -> Result<usize> {
    let path = meta_dir(root, table).join(list_name(version));
    let bytes = std::fs::read(&path).map_err(|e| EngineError::io(&path, e))?;
    let list: ManifestList =
        serde_json::from_slice(&bytes).map_err(|e| EngineError::format(&path, e))?;
    Ok(list.manifests.len())
}
