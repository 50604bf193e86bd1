//! Metadata layout strategies.
//!
//! All three layouts share the commit log as their source of truth and
//! differ in the auxiliary metadata they maintain, and therefore in how many
//! files a reader must touch to reconstruct a snapshot:
//!
//! * Delta-style: list the log directory, read the latest checkpoint at or
//!   below the target version, then replay the commit files after it.
//! * Iceberg-style: read one top-level metadata file, one manifest list for
//!   the chosen snapshot and every manifest that list names.
//! * Hudi-style: list the timeline and read a single metadata index that
//!   records the live interval of every file.

mod delta;
mod hudi;
pub(crate) mod iceberg;

use std::path::Path;

use crate::error::{EngineError, Result};
use crate::log::{parse_versioned, read_commit, CommitEntry, Snapshot};
use crate::storage::Io;
use crate::table::{meta_dir, Layout};

/// What a single listing of a table's metadata directory reveals.
#[derive(Debug, Default)]
pub(crate) struct Listing {
    pub layout: Option<Layout>,
    pub names: Vec<String>,
    pub latest_commit: Option<u64>,
}

impl Listing {
    fn versions<'a>(&'a self, suffix: &'a str) -> impl Iterator<Item = u64> + 'a {
        self.names
            .iter()
            .filter_map(move |n| parse_versioned(n, suffix))
    }
}

pub(crate) fn layout_marker(layout: Layout) -> String {
    format!("layout.{}", layout.keyword())
}

pub(crate) fn list(io: &mut Io, root: &Path, table: &str) -> Result<Listing> {
    let names = io.list(&meta_dir(root, table))?;
    let layout = names
        .iter()
        .find_map(|n| n.strip_prefix("layout.").and_then(Layout::from_keyword));
    let latest_commit = names
        .iter()
        .filter_map(|n| parse_versioned(n, ".commit"))
        .max();
    Ok(Listing {
        layout,
        names,
        latest_commit,
    })
}

/// Reconstructs the latest snapshot, or the one at `asof`, using the
/// table's layout-specific read path.
pub(crate) fn read_snapshot(
    io: &mut Io,
    root: &Path,
    table: &str,
    asof: Option<u64>,
) -> Result<Snapshot> {
    let listing = list(io, root, table)?;
    let (Some(layout), Some(latest)) = (listing.layout, listing.latest_commit) else {
        return Err(EngineError::UnknownTable(table.to_string()));
    };
    if let Some(v) = asof {
        if v > latest {
            return Err(not_found(table, v));
        }
    }
    match layout {
        Layout::DeltaStyle => delta::read(io, root, table, &listing, asof),
        Layout::IcebergStyle => iceberg::read(io, root, table, &listing, asof),
        Layout::HudiStyle => hudi::read(io, root, table, &listing, asof),
    }
}

/// Writes the layout's auxiliary metadata after `entry` has been claimed.
pub(crate) fn publish(
    io: &mut Io,
    root: &Path,
    entry: &CommitEntry,
    snap: &Snapshot,
) -> Result<()> {
    let table = snap.descriptor.name.as_str();
    match snap.descriptor.layout {
        Layout::DeltaStyle => delta::publish(io, root, table, entry, snap),
        Layout::IcebergStyle => iceberg::publish(io, root, table, snap.version),
        Layout::HudiStyle => hudi::publish(io, root, table, snap.version),
    }
}

pub(crate) fn not_found(table: &str, version: u64) -> EngineError {
    EngineError::VersionNotFound {
        table: table.to_string(),
        version,
    }
}

/// Replays commit files `from..=to` on top of `base`.
pub(crate) fn replay(
    io: &mut Io,
    root: &Path,
    table: &str,
    mut base: Option<Snapshot>,
    from: u64,
    to: u64,
) -> Result<Snapshot> {
    for v in from..=to {
        let entry = read_commit(io, root, table, v)?.ok_or_else(|| not_found(table, v))?;
        base = Some(Snapshot::apply(base.as_ref(), &entry)?);
    }
    base.ok_or_else(|| not_found(table, to))
}

fn sort_deltas(snap: &mut Snapshot) {
    for list in snap.pending_deltas.values_mut() {
        list.sort_by(|a, b| {
            a.created_by_version
                .cmp(&b.created_by_version)
                .then_with(|| a.file_id.cmp(&b.file_id))
        });
    }
}
