use std::path::{Path, PathBuf};

use super::{not_found, replay, Listing};
use crate::error::{EngineError, Result};
use crate::log::{CommitEntry, Snapshot};
use crate::storage::{FileClass, Io};
use crate::table::meta_dir;

fn checkpoint_path(root: &Path, table: &str, version: u64) -> PathBuf {
    meta_dir(root, table).join(format!("{version:020}.checkpoint"))
}

fn retention_path(root: &Path, table: &str, version: u64) -> PathBuf {
    meta_dir(root, table).join(format!("{version:020}.retention"))
}

pub(super) fn read(
    io: &mut Io,
    root: &Path,
    table: &str,
    listing: &Listing,
    asof: Option<u64>,
) -> Result<Snapshot> {
    let latest = listing.latest_commit.expect("caller checked");
    let target = asof.unwrap_or(latest);
    let retain_from = listing.versions(".retention").max().unwrap_or(0);
    if target < retain_from {
        return Err(not_found(table, target));
    }
    let checkpoint = listing
        .versions(".checkpoint")
        .filter(|&v| v <= target)
        .max();
    let (base, from) = match checkpoint {
        Some(cp) => {
            let path = checkpoint_path(root, table, cp);
            let bytes = io.read(&path, FileClass::Metadata)?;
            let snap: Snapshot =
                serde_json::from_slice(&bytes).map_err(|e| EngineError::format(&path, e))?;
            (Some(snap), cp + 1)
        }
        None => (None, 0),
    };
    if from > target {
        return base.ok_or_else(|| not_found(table, target));
    }
    replay(io, root, table, base, from, target)
}

pub(super) fn publish(
    io: &mut Io,
    root: &Path,
    table: &str,
    entry: &CommitEntry,
    snap: &Snapshot,
) -> Result<()> {
    let interval = snap.descriptor.checkpoint_interval;
    if snap.version > 0 && snap.version.is_multiple_of(interval) {
        let body = serde_json::to_string(snap).expect("snapshot serializes");
        io.write_replace(&checkpoint_path(root, table, snap.version), body.as_bytes())?;
    }
    if let Some(r) = entry.retain_from {
        io.write_replace(&retention_path(root, table, r), b"")?;
    }
    Ok(())
}
