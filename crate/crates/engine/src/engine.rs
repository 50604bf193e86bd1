//! Table operations and the optimistic commit protocol.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::{EngineError, Result};
use crate::layout;
use crate::log::{self, Action, CommitEntry, CommitKind, Snapshot};
use crate::predicate::Predicate;
use crate::source;
use crate::storage::{AtomicCounters, Io, OpenBreakdown, StorageCounters};
use crate::table::{
    self, data_dir, meta_dir, new_file_id, DataFile, DeltaContents, Layout, TableDescriptor,
    WriteMode,
};
use crate::value::{Row, Value};

/// Retries after a lost commit race before giving up with a conflict.
pub const DEFAULT_COMMIT_RETRIES: u32 = 3;

/// Fraction of `target_file_rows` under which the Hudi-style merge path
/// considers a file small and repacks it.
const SMALL_FILE_NUMERATOR: u64 = 4;
const SMALL_FILE_DENOMINATOR: u64 = 5;

/// Result of one engine operation together with the storage activity it
/// caused.
#[derive(Debug, Clone)]
pub struct Outcome<T> {
    pub value: T,
    pub counters: StorageCounters,
    pub opens: OpenBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub version: u64,
    pub rows: Vec<Row>,
    pub files_scanned: usize,
    pub files_pruned: usize,
}

type Replan<'a> = &'a mut dyn FnMut(&mut Io<'_>, &Snapshot) -> Result<Plan>;

/// A planned but unpublished commit.
#[derive(Debug, Clone)]
struct Plan {
    actions: Vec<Action>,
    /// Base files this plan depends on, with the delta count it observed.
    touched: BTreeMap<String, usize>,
    retain_from: Option<u64>,
    written: Vec<PathBuf>,
}

impl Plan {
    fn empty() -> Self {
        Self {
            actions: Vec::new(),
            touched: BTreeMap::new(),
            retain_from: None,
            written: Vec::new(),
        }
    }

    fn still_valid(&self, latest: &Snapshot) -> bool {
        self.touched.iter().all(|(id, deltas)| {
            latest.live_files.contains_key(id)
                && latest.pending_deltas.get(id).map_or(0, Vec::len) == *deltas
        })
    }
}

/// A MERGE whose data files are written but whose commit is not yet
/// published. Splitting the two steps lets callers stage races.
#[derive(Debug, Clone)]
pub struct PendingCommit {
    table: String,
    kind: CommitKind,
    parent: Snapshot,
    plan: Plan,
}

impl PendingCommit {
    pub fn parent_version(&self) -> u64 {
        self.parent.version
    }
}

/// One engine instance ("compute cluster") over a shared storage root.
/// Instances keep no table state in memory; everything is re-read from the
/// storage root, so any number of instances may share it.
#[derive(Debug)]
pub struct Engine {
    root: PathBuf,
    counters: AtomicCounters,
    commit_retries: u32,
}

impl Engine {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| EngineError::io(&root, e))?;
        let probe = root.join(format!(".probe-{}", uuid::Uuid::new_v4().simple()));
        fs::write(&probe, b"").map_err(|e| EngineError::io(&probe, e))?;
        let _ = fs::remove_file(&probe);
        Ok(Self {
            root,
            counters: AtomicCounters::default(),
            commit_retries: DEFAULT_COMMIT_RETRIES,
        })
    }

    pub fn with_commit_retries(mut self, retries: u32) -> Self {
        self.commit_retries = retries;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Cumulative storage counters of this instance.
    pub fn counters(&self) -> StorageCounters {
        self.counters.snapshot()
    }

    pub(crate) fn io(&self) -> Io<'_> {
        Io::new(&self.counters)
    }

    pub(crate) fn finish<T>(io: Io<'_>, value: T) -> Outcome<T> {
        Outcome {
            value,
            counters: io.counters(),
            opens: io.opens(),
        }
    }

    pub fn list_tables(&self) -> Result<Vec<String>> {
        let mut io = self.io();
        let mut out = Vec::new();
        for name in io.list(&self.root)? {
            if self.root.join(&name).join("meta").is_dir() {
                let listing = layout::list(&mut io, &self.root, &name)?;
                if listing.layout.is_some() && listing.latest_commit.is_some() {
                    out.push(name);
                }
            }
        }
        Ok(out)
    }

    pub fn create_table(&self, descriptor: TableDescriptor) -> Result<Outcome<CommitEntry>> {
        descriptor.validate()?;
        let mut io = self.io();
        let name = descriptor.name.clone();
        for dir in [meta_dir(&self.root, &name), data_dir(&self.root, &name)] {
            fs::create_dir_all(&dir).map_err(|e| EngineError::io(&dir, e))?;
        }
        let marker = meta_dir(&self.root, &name).join(layout::layout_marker(descriptor.layout));
        let marker_existed = marker.exists();
        if !marker_existed {
            io.write_replace(&marker, b"")?;
        }
        let entry = CommitEntry {
            version: 0,
            parent_version: None,
            commit_kind: CommitKind::Create,
            retain_from: None,
            actions: vec![Action::Schema(descriptor)],
        };
        if !log::try_publish(&mut io, &self.root, &name, &entry)? {
            if !marker_existed {
                let _ = io.delete(&marker);
            }
            return Err(EngineError::TableExists(name));
        }
        let snap = Snapshot::apply(None, &entry)?;
        layout::publish(&mut io, &self.root, &entry, &snap)?;
        Ok(Self::finish(io, entry))
    }

    /// Reconstructs a snapshot using the table's metadata layout.
    pub fn read_metadata(&self, table: &str, asof: Option<u64>) -> Result<Outcome<Snapshot>> {
        let mut io = self.io();
        let snap = layout::read_snapshot(&mut io, &self.root, table, asof)?;
        Ok(Self::finish(io, snap))
    }

    pub fn current_version(&self, table: &str) -> Result<u64> {
        let mut io = self.io();
        let listing = layout::list(&mut io, &self.root, table)?;
        match (listing.layout, listing.latest_commit) {
            (Some(_), Some(v)) => Ok(v),
            _ => Err(EngineError::UnknownTable(table.to_string())),
        }
    }

    /// Rebuilds version `version` purely from commit files, ignoring any
    /// layout-specific metadata.
    pub fn replay_log(&self, table: &str, version: u64) -> Result<Snapshot> {
        let mut io = self.io();
        layout::replay(&mut io, &self.root, table, None, 0, version)
    }

    pub fn read_commit(&self, table: &str, version: u64) -> Result<Option<CommitEntry>> {
        let mut io = self.io();
        log::read_commit(&mut io, &self.root, table, version)
    }

    pub fn load_append(&self, table: &str, rows: Vec<Row>) -> Result<Outcome<Snapshot>> {
        let mut io = self.io();
        let parent = layout::read_snapshot(&mut io, &self.root, table, None)?;
        let snap = self.append_rows(&mut io, parent, rows)?;
        Ok(Self::finish(io, snap))
    }

    /// `COPY INTO`: appends the rows of a CSV source.
    pub fn copy_into(&self, table: &str, path: &Path) -> Result<Outcome<Snapshot>> {
        let mut io = self.io();
        let parent = layout::read_snapshot(&mut io, &self.root, table, None)?;
        let rows = source::read_rows(path, &parent.descriptor.schema)?;
        let snap = self.append_rows(&mut io, parent, rows)?;
        Ok(Self::finish(io, snap))
    }

    fn append_rows(&self, io: &mut Io<'_>, parent: Snapshot, rows: Vec<Row>) -> Result<Snapshot> {
        for row in &rows {
            parent.descriptor.schema.check_row(row)?;
        }
        let table = parent.descriptor.name.clone();
        let root = self.root.clone();
        let mut replan = |io: &mut Io<'_>, snap: &Snapshot| -> Result<Plan> {
            let desc = &snap.descriptor;
            let mut plan = Plan::empty();
            for chunk in rows.chunks(desc.target_file_rows as usize) {
                let f = table::write_data_file(
                    io,
                    &root,
                    desc,
                    new_file_id("d", snap.version + 1),
                    chunk,
                )?;
                plan.written.push(data_path(&root, &table, &f.file_id));
                plan.actions.push(Action::AddFile(f));
            }
            Ok(plan)
        };
        let plan = replan(io, &parent)?;
        let (_, snap) = self.commit_loop(
            io,
            &table,
            CommitKind::Append,
            parent,
            plan,
            Some(&mut replan),
        )?;
        Ok(snap)
    }

    pub fn merge(
        &self,
        table: &str,
        upserts: Vec<Row>,
        delete_keys: Vec<Value>,
    ) -> Result<Outcome<Snapshot>> {
        let pending = self.begin_merge(table, upserts, delete_keys)?;
        let c1 = pending.counters;
        let o1 = pending.opens;
        let mut out = self.commit_pending(pending.value)?;
        out.counters += c1;
        out.opens.metadata += o1.metadata;
        out.opens.data += o1.data;
        out.opens.delta += o1.delta;
        Ok(out)
    }

    pub fn begin_merge(
        &self,
        table: &str,
        upserts: Vec<Row>,
        delete_keys: Vec<Value>,
    ) -> Result<Outcome<PendingCommit>> {
        let mut io = self.io();
        let parent = layout::read_snapshot(&mut io, &self.root, table, None)?;
        let pending = self.prepare_merge(&mut io, parent, upserts, delete_keys)?;
        Ok(Self::finish(io, pending))
    }

    /// `MERGE INTO ... USING`: applies a refresh source, optionally limited
    /// to a half-open range of its row positions.
    pub fn merge_from_source(
        &self,
        table: &str,
        path: &Path,
        range: Option<Range<u64>>,
    ) -> Result<Outcome<Snapshot>> {
        let mut io = self.io();
        let parent = layout::read_snapshot(&mut io, &self.root, table, None)?;
        let changes = source::read_changes(
            path,
            &parent.descriptor.schema,
            parent.descriptor.key_index(),
            range,
        )?;
        let pending = self.prepare_merge(&mut io, parent, changes.upserts, changes.deletes)?;
        let (_, snap) = self.commit_loop(
            &mut io,
            table,
            pending.kind,
            pending.parent,
            pending.plan,
            None,
        )?;
        Ok(Self::finish(io, snap))
    }

    fn prepare_merge(
        &self,
        io: &mut Io<'_>,
        parent: Snapshot,
        upserts: Vec<Row>,
        delete_keys: Vec<Value>,
    ) -> Result<PendingCommit> {
        for row in &upserts {
            parent.descriptor.schema.check_row(row)?;
        }
        let plan = self.plan_merge(io, &parent, upserts, delete_keys)?;
        Ok(PendingCommit {
            table: parent.descriptor.name.clone(),
            kind: CommitKind::Merge,
            parent,
            plan,
        })
    }

    pub fn commit_pending(&self, pending: PendingCommit) -> Result<Outcome<Snapshot>> {
        let mut io = self.io();
        let (_, snap) = self.commit_loop(
            &mut io,
            &pending.table,
            pending.kind,
            pending.parent,
            pending.plan,
            None,
        )?;
        Ok(Self::finish(io, snap))
    }

    fn plan_merge(
        &self,
        io: &mut Io<'_>,
        snap: &Snapshot,
        upserts: Vec<Row>,
        delete_keys: Vec<Value>,
    ) -> Result<Plan> {
        let desc = &snap.descriptor;
        let key_idx = desc.key_index();
        let mut upsert_map: BTreeMap<Value, Row> = BTreeMap::new();
        for row in upserts {
            upsert_map.insert(row[key_idx].clone(), row);
        }
        let deletes: BTreeSet<Value> = delete_keys.into_iter().collect();
        let affected: BTreeSet<&Value> = upsert_map.keys().chain(deletes.iter()).collect();

        let mut plan = Plan::empty();
        let mut matched: BTreeSet<Value> = BTreeSet::new();
        // Rows of CoW rewrites and unmatched inserts, not yet written.
        let mut outputs: Vec<Vec<Row>> = Vec::new();
        let next = snap.version + 1;

        for (id, file) in &snap.live_files {
            let Some(Some((lo, hi))) = file.stats.get(key_idx) else {
                continue;
            };
            if affected.range::<Value, _>(lo..=hi).next().is_none() {
                continue;
            }
            let deltas = snap
                .pending_deltas
                .get(id)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let base = table::read_data_file(io, &self.root, desc, id)?;
            let contents = deltas
                .iter()
                .map(|d| table::read_delta_file(io, &self.root, desc, &d.file_id))
                .collect::<Result<Vec<_>>>()?;
            let group = resolve_group(base, &contents, key_idx);
            let hits: BTreeSet<Value> = group
                .iter()
                .map(|r| r[key_idx].clone())
                .filter(|k| affected.contains(k))
                .collect();
            if hits.is_empty() {
                continue;
            }
            plan.touched.insert(id.clone(), deltas.len());
            match desc.write_mode {
                WriteMode::Cow => {
                    let rows: Vec<Row> = group
                        .into_iter()
                        .filter(|r| {
                            !deletes.contains(&r[key_idx]) || upsert_map.contains_key(&r[key_idx])
                        })
                        .map(|r| upsert_map.get(&r[key_idx]).cloned().unwrap_or(r))
                        .collect();
                    plan.actions.push(Action::RemoveFile {
                        file_id: id.clone(),
                    });
                    if !rows.is_empty() {
                        outputs.push(rows);
                    }
                }
                WriteMode::Mor => {
                    let contents = DeltaContents {
                        deleted_keys: hits
                            .iter()
                            .filter(|k| deletes.contains(*k))
                            .cloned()
                            .collect(),
                        upserted_rows: hits
                            .iter()
                            .filter_map(|k| upsert_map.get(k).cloned())
                            .collect(),
                    };
                    let d = table::write_delta_file(
                        io,
                        &self.root,
                        desc,
                        new_file_id("x", next),
                        id,
                        &contents,
                    )?;
                    plan.written
                        .push(delta_path(&self.root, &desc.name, &d.file_id));
                    plan.actions.push(Action::AddDelta(d));
                }
            }
            matched.extend(hits);
        }

        let unmatched: Vec<Row> = upsert_map
            .into_iter()
            .filter(|(k, _)| !matched.contains(k))
            .map(|(_, r)| r)
            .collect();
        for chunk in unmatched.chunks(desc.target_file_rows as usize) {
            outputs.push(chunk.to_vec());
        }

        if desc.layout == Layout::HudiStyle {
            outputs = self.pack_small_files(io, snap, &mut plan, outputs)?;
        }
        for rows in outputs {
            let f = table::write_data_file(io, &self.root, desc, new_file_id("d", next), &rows)?;
            plan.written
                .push(data_path(&self.root, &desc.name, &f.file_id));
            plan.actions.push(Action::AddFile(f));
        }
        Ok(plan)
    }

    /// Hudi-style small-file handling on the write path: new output and
    /// existing small files without pending deltas are first-fit packed up to
    /// the target size.
    fn pack_small_files(
        &self,
        io: &mut Io<'_>,
        snap: &Snapshot,
        plan: &mut Plan,
        outputs: Vec<Vec<Row>>,
    ) -> Result<Vec<Vec<Row>>> {
        let desc = &snap.descriptor;
        let target = desc.target_file_rows;
        let small = (target * SMALL_FILE_NUMERATOR / SMALL_FILE_DENOMINATOR).max(1);

        enum Item {
            Existing(String, u64),
            New(Vec<Row>),
        }
        let mut items: Vec<Item> = snap
            .live_files
            .iter()
            .filter(|(id, f)| {
                f.row_count < small
                    && !plan.touched.contains_key(*id)
                    && !snap.pending_deltas.contains_key(*id)
            })
            .map(|(id, f)| Item::Existing(id.clone(), f.row_count))
            .collect();
        let mut kept = Vec::new();
        for rows in outputs {
            if (rows.len() as u64) < small {
                items.push(Item::New(rows));
            } else {
                kept.push(rows);
            }
        }
        let weight = |it: &Item| match it {
            Item::Existing(_, n) => *n,
            Item::New(rows) => rows.len() as u64,
        };
        let mut bins: Vec<(u64, Vec<Item>)> = Vec::new();
        for it in items {
            let w = weight(&it);
            match bins.iter_mut().find(|(load, _)| load + w <= target) {
                Some(bin) => {
                    bin.0 += w;
                    bin.1.push(it);
                }
                None => bins.push((w, vec![it])),
            }
        }
        for (_, bin) in bins {
            if let [Item::Existing(..)] = bin.as_slice() {
                continue;
            }
            let mut rows = Vec::new();
            for it in bin {
                match it {
                    Item::Existing(id, _) => {
                        rows.extend(table::read_data_file(io, &self.root, desc, &id)?);
                        plan.touched.insert(id.clone(), 0);
                        plan.actions.push(Action::RemoveFile { file_id: id });
                    }
                    Item::New(r) => rows.extend(r),
                }
            }
            if !rows.is_empty() {
                kept.push(rows);
            }
        }
        Ok(kept)
    }

    pub fn scan(
        &self,
        table: &str,
        predicate: &Predicate,
        asof: Option<u64>,
    ) -> Result<Outcome<ScanResult>> {
        self.scan_with(table, asof, |_| Ok(predicate.clone()))
    }

    /// Scans with a predicate built from the resolved table descriptor, so
    /// callers can bind column names without a separate metadata read.
    pub fn scan_with(
        &self,
        table: &str,
        asof: Option<u64>,
        build: impl FnOnce(&TableDescriptor) -> Result<Predicate>,
    ) -> Result<Outcome<ScanResult>> {
        let mut io = self.io();
        let snap = layout::read_snapshot(&mut io, &self.root, table, asof)?;
        let predicate = build(&snap.descriptor)?;
        let desc = &snap.descriptor;
        let key_idx = desc.key_index();
        let mut result = ScanResult {
            version: snap.version,
            rows: Vec::new(),
            files_scanned: 0,
            files_pruned: 0,
        };
        for (id, file) in &snap.live_files {
            let deltas = snap
                .pending_deltas
                .get(id)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let may_match = predicate.may_match(&file.stats)
                || deltas.iter().any(|d| predicate.may_match(&d.stats));
            if !may_match {
                result.files_pruned += 1;
                continue;
            }
            result.files_scanned += 1;
            let base = table::read_data_file(&mut io, &self.root, desc, id)?;
            let contents = deltas
                .iter()
                .map(|d| table::read_delta_file(&mut io, &self.root, desc, &d.file_id))
                .collect::<Result<Vec<_>>>()?;
            result.rows.extend(
                resolve_group(base, &contents, key_idx)
                    .into_iter()
                    .filter(|r| predicate.matches(r)),
            );
        }
        Ok(Self::finish(io, result))
    }

    /// Compacts the table: merges pending deltas into their base data and
    /// first-fit bin-packs files, in ascending file-id order, into files of at
    /// most `target_file_rows` rows.
    pub fn optimize(&self, table: &str) -> Result<Outcome<Snapshot>> {
        let mut io = self.io();
        let parent = layout::read_snapshot(&mut io, &self.root, table, None)?;
        let root = self.root.clone();
        let mut replan = |io: &mut Io<'_>, snap: &Snapshot| plan_optimize(io, &root, snap);
        let plan = replan(&mut io, &parent)?;
        let (_, snap) = self.commit_loop(
            &mut io,
            table,
            CommitKind::Optimize,
            parent,
            plan,
            Some(&mut replan),
        )?;
        Ok(Self::finish(io, snap))
    }

    /// Expires versions older than `current - retain_versions` and deletes
    /// every physical file no retained snapshot references.
    pub fn vacuum(&self, table: &str, retain_versions: u64) -> Result<Outcome<Snapshot>> {
        let mut io = self.io();
        let parent = layout::read_snapshot(&mut io, &self.root, table, None)?;
        let mut replan = |_: &mut Io<'_>, snap: &Snapshot| -> Result<Plan> {
            let mut plan = Plan::empty();
            plan.retain_from = Some(
                snap.retain_from
                    .max(snap.version.saturating_sub(retain_versions)),
            );
            Ok(plan)
        };
        let plan = replan(&mut io, &parent)?;
        let (entry, snap) = self.commit_loop(
            &mut io,
            table,
            CommitKind::Vacuum,
            parent,
            plan,
            Some(&mut replan),
        )?;
        let retain_from = entry.retain_from.expect("vacuum sets retention");

        let mut ever = BTreeSet::new();
        let mut reachable = BTreeSet::new();
        let mut state: Option<Snapshot> = None;
        for v in 0..=entry.version {
            let commit = log::read_commit(&mut io, &self.root, table, v)?
                .ok_or_else(|| layout::not_found(table, v))?;
            let s = Snapshot::apply(state.as_ref(), &commit)?;
            for f in s.referenced_files() {
                if v >= retain_from {
                    reachable.insert(f.clone());
                }
                ever.insert(f);
            }
            state = Some(s);
        }
        let dir = data_dir(&self.root, table);
        for name in ever.difference(&reachable) {
            io.delete(&dir.join(name))?;
        }
        Ok(Self::finish(io, snap))
    }

    /// Publishes `plan` on top of `parent`, retrying lost races. Plans whose
    /// touched files changed underneath are re-planned when `replan` is
    /// given and fail with a conflict otherwise.
    fn commit_loop(
        &self,
        io: &mut Io<'_>,
        table: &str,
        kind: CommitKind,
        mut parent: Snapshot,
        mut plan: Plan,
        mut replan: Option<Replan<'_>>,
    ) -> Result<(CommitEntry, Snapshot)> {
        for attempt in 0..=self.commit_retries {
            let entry = CommitEntry {
                version: parent.version + 1,
                parent_version: Some(parent.version),
                commit_kind: kind,
                retain_from: plan.retain_from,
                actions: plan.actions.clone(),
            };
            let snap = Snapshot::apply(Some(&parent), &entry)?;
            if log::try_publish(io, &self.root, table, &entry)? {
                layout::publish(io, &self.root, &entry, &snap)?;
                return Ok((entry, snap));
            }
            let latest = layout::read_snapshot(io, &self.root, table, None)?;
            if !plan.still_valid(&latest) {
                match replan.as_deref_mut() {
                    Some(f) if attempt < self.commit_retries => {
                        discard(io, &plan);
                        plan = f(io, &latest)?;
                    }
                    _ => {
                        discard(io, &plan);
                        return Err(EngineError::Conflict {
                            table: table.to_string(),
                            version: entry.version,
                            reason: "a concurrent commit modified the same base files".into(),
                        });
                    }
                }
            }
            parent = latest;
        }
        discard(io, &plan);
        Err(EngineError::Conflict {
            table: table.to_string(),
            version: parent.version + 1,
            reason: format!("retry budget of {} exhausted", self.commit_retries),
        })
    }
}

fn discard(io: &mut Io<'_>, plan: &Plan) {
    for p in &plan.written {
        let _ = io.delete(p);
    }
}

fn data_path(root: &Path, table: &str, file_id: &str) -> PathBuf {
    data_dir(root, table).join(format!("{file_id}.data"))
}

fn delta_path(root: &Path, table: &str, file_id: &str) -> PathBuf {
    data_dir(root, table).join(format!("{file_id}.delta"))
}

/// Applies delta files, in order, to the rows of their base file.
pub(crate) fn resolve_group(base: Vec<Row>, deltas: &[DeltaContents], key_idx: usize) -> Vec<Row> {
    if deltas.is_empty() {
        return base;
    }
    let mut rows: BTreeMap<Value, Row> =
        base.into_iter().map(|r| (r[key_idx].clone(), r)).collect();
    for d in deltas {
        for k in &d.deleted_keys {
            rows.remove(k);
        }
        for r in &d.upserted_rows {
            rows.insert(r[key_idx].clone(), r.clone());
        }
    }
    rows.into_values().collect()
}

fn plan_optimize(io: &mut Io<'_>, root: &Path, snap: &Snapshot) -> Result<Plan> {
    let desc = &snap.descriptor;
    let key_idx = desc.key_index();
    let target = desc.target_file_rows;

    struct Item<'a> {
        id: &'a str,
        file: &'a DataFile,
        deltas: usize,
        rows: Option<Vec<Row>>,
        weight: u64,
    }
    let mut items = Vec::new();
    for (id, file) in &snap.live_files {
        let deltas = snap
            .pending_deltas
            .get(id)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let (rows, weight) = if deltas.is_empty() {
            (None, file.row_count)
        } else {
            let base = table::read_data_file(io, root, desc, id)?;
            let contents = deltas
                .iter()
                .map(|d| table::read_delta_file(io, root, desc, &d.file_id))
                .collect::<Result<Vec<_>>>()?;
            let rows = resolve_group(base, &contents, key_idx);
            let n = rows.len() as u64;
            (Some(rows), n)
        };
        items.push(Item {
            id,
            file,
            deltas: deltas.len(),
            rows,
            weight,
        });
    }

    let mut bins: Vec<(u64, Vec<Item>)> = Vec::new();
    for it in items {
        match bins.iter_mut().find(|(load, _)| load + it.weight <= target) {
            Some(bin) => {
                bin.0 += it.weight;
                bin.1.push(it);
            }
            None => bins.push((it.weight, vec![it])),
        }
    }

    let mut plan = Plan::empty();
    for (_, bin) in bins {
        if bin.len() == 1 && bin[0].deltas == 0 {
            continue;
        }
        let mut rows = Vec::new();
        for it in bin {
            plan.touched.insert(it.id.to_string(), it.deltas);
            plan.actions.push(Action::RemoveFile {
                file_id: it.id.to_string(),
            });
            match it.rows {
                Some(r) => rows.extend(r),
                None if it.file.row_count > 0 => {
                    rows.extend(table::read_data_file(io, root, desc, it.id)?)
                }
                None => {}
            }
        }
        if !rows.is_empty() {
            let f =
                table::write_data_file(io, root, desc, new_file_id("d", snap.version + 1), &rows)?;
            plan.written.push(data_path(root, &desc.name, &f.file_id));
            plan.actions.push(Action::AddFile(f));
        }
    }
    Ok(plan)
}
