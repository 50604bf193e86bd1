//! Connections to systems under test: the in-process engine and a dry-run
//! connector that only records scripts.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use lsth_engine::sql::{self, Statement};
use lsth_engine::{Engine, StorageCounters};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::workload::{CatalogView, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConnectorKind {
    MiniLst,
    DryRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub kind: ConnectorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: Params,
}

impl ConnectionSpec {
    pub fn mini_lst(root: impl Into<PathBuf>) -> Self {
        Self {
            kind: ConnectorKind::MiniLst,
            storage_root: Some(root.into()),
            options: Params::new(),
        }
    }

    pub fn dry_run(root: impl Into<PathBuf>) -> Self {
        Self {
            kind: ConnectorKind::DryRun,
            storage_root: Some(root.into()),
            options: Params::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatementResult {
    pub row_count: u64,
    pub scalar: Option<f64>,
    pub engine_counters_delta: StorageCounters,
}

/// One session's handle on a target. Not shared between sessions.
pub trait Connection: Send {
    fn execute(&mut self, sql: &str) -> Result<StatementResult>;
    fn current_version(&mut self, table: &str) -> Result<u64>;
    fn catalog(&self) -> &dyn CatalogView;
    /// Marks the start of a session; the dry-run connector switches scripts.
    fn begin_session(&mut self, label: &str) -> Result<()>;
    /// Cumulative storage counters of this connection's engine.
    fn counters(&self) -> StorageCounters;
    fn is_open(&self) -> bool;
    fn close(&mut self);
}

fn unreachable(target: &str, message: impl ToString) -> HarnessError {
    HarnessError::TargetUnreachable {
        target: target.to_string(),
        message: message.to_string(),
    }
}

fn root_of<'a>(target: &str, spec: &'a ConnectionSpec) -> Result<&'a Path> {
    spec.storage_root
        .as_deref()
        .ok_or_else(|| unreachable(target, "storage_root is required"))
}

/// Opens one connection.
pub fn open(target: &str, spec: &ConnectionSpec) -> Result<Box<dyn Connection>> {
    Ok(open_pool(target, spec, 1)?.pop().expect("pool of one"))
}

/// Opens `size` connections to one target. Dry-run connections of one pool
/// share their simulated table versions.
pub fn open_pool(
    target: &str,
    spec: &ConnectionSpec,
    size: usize,
) -> Result<Vec<Box<dyn Connection>>> {
    let root = root_of(target, spec)?;
    match spec.kind {
        ConnectorKind::MiniLst => (0..size)
            .map(|_| {
                let engine = Engine::open(root).map_err(|e| unreachable(target, e))?;
                Ok(Box::new(MiniLstConnection {
                    engine: Arc::new(engine),
                    open: true,
                }) as Box<dyn Connection>)
            })
            .collect(),
        ConnectorKind::DryRun => {
            fs::create_dir_all(root).map_err(|e| unreachable(target, e))?;
            let versions = Arc::new(Mutex::new(BTreeMap::new()));
            Ok((0..size)
                .map(|_| {
                    Box::new(DryRunConnection {
                        root: root.to_path_buf(),
                        script: root.join("script_unnamed.sql"),
                        versions: Arc::clone(&versions),
                        catalog: DryRunCatalog,
                        open: true,
                    }) as Box<dyn Connection>
                })
                .collect())
        }
    }
}

pub struct MiniLstConnection {
    engine: Arc<Engine>,
    open: bool,
}

impl MiniLstConnection {
    pub fn engine(&self) -> &Engine {
        &self.engine
    }
}

fn closed() -> HarnessError {
    unreachable("connection", "connection is closed")
}

impl Connection for MiniLstConnection {
    fn execute(&mut self, sql: &str) -> Result<StatementResult> {
        if !self.open {
            return Err(closed());
        }
        let out = self.engine.execute(sql)?;
        Ok(StatementResult {
            row_count: out.row_count,
            scalar: out.scalar(),
            engine_counters_delta: out.counters,
        })
    }

    fn current_version(&mut self, table: &str) -> Result<u64> {
        Ok(self.engine.current_version(table)?)
    }

    fn catalog(&self) -> &dyn CatalogView {
        self
    }

    fn begin_session(&mut self, _label: &str) -> Result<()> {
        if self.open {
            Ok(())
        } else {
            Err(closed())
        }
    }

    fn counters(&self) -> StorageCounters {
        self.engine.counters()
    }

    fn is_open(&self) -> bool {
        self.open
    }

    fn close(&mut self) {
        self.open = false;
    }
}

impl CatalogView for MiniLstConnection {
    fn tables(&self) -> Result<Vec<String>> {
        Ok(self.engine.list_tables()?)
    }

    fn row_count(&self, table: &str) -> Result<u64> {
        Ok(self
            .engine
            .read_metadata(table, None)?
            .value
            .total_rows_upper_bound())
    }

    fn source_rows(&self, path: &Path) -> Result<u64> {
        Ok(lsth_engine::source::count_rows(path)?)
    }
}

pub struct DryRunConnection {
    root: PathBuf,
    script: PathBuf,
    versions: Arc<Mutex<BTreeMap<String, u64>>>,
    catalog: DryRunCatalog,
    open: bool,
}

/// Dry-run catalog: no tables, but staged source files are local and can be
/// counted.
pub struct DryRunCatalog;

impl CatalogView for DryRunCatalog {
    fn tables(&self) -> Result<Vec<String>> {
        Err(HarnessError::Config(
            "catalog unsupported by the dry-run connector".into(),
        ))
    }

    fn row_count(&self, _table: &str) -> Result<u64> {
        Err(HarnessError::Config(
            "catalog unsupported by the dry-run connector".into(),
        ))
    }

    fn source_rows(&self, path: &Path) -> Result<u64> {
        Ok(lsth_engine::source::count_rows(path)?)
    }
}

fn written_table(stmt: &Statement) -> Option<(&str, bool)> {
    match stmt {
        Statement::CreateTable { name, .. } => Some((name, true)),
        Statement::CopyInto { table, .. }
        | Statement::MergeInto { table, .. }
        | Statement::DeleteFrom { table, .. }
        | Statement::Optimize { table }
        | Statement::Vacuum { table, .. } => Some((table, false)),
        Statement::Select(_) => None,
    }
}

impl Connection for DryRunConnection {
    fn execute(&mut self, sql_text: &str) -> Result<StatementResult> {
        if !self.open {
            return Err(closed());
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.script)
            .map_err(|e| HarnessError::io(&self.script, e))?;
        writeln!(f, "{};", sql_text.trim_end().trim_end_matches(';'))
            .map_err(|e| HarnessError::io(&self.script, e))?;
        // Simulated versions follow the engine's numbering: CREATE is 0 and
        // every later write adds one.
        if let Ok(stmt) = sql::parse(sql_text) {
            if let Some((table, create)) = written_table(&stmt) {
                let mut v = self.versions.lock().expect("version map");
                match (create, v.get_mut(table)) {
                    (true, _) => {
                        v.insert(table.to_string(), 0);
                    }
                    (false, Some(n)) => *n += 1,
                    (false, None) => {}
                }
            }
        }
        Ok(StatementResult::default())
    }

    fn current_version(&mut self, table: &str) -> Result<u64> {
        self.versions
            .lock()
            .expect("version map")
            .get(table)
            .copied()
            .ok_or_else(|| {
                HarnessError::Engine(lsth_engine::EngineError::UnknownTable(table.to_string()))
            })
    }

    fn catalog(&self) -> &dyn CatalogView {
        &self.catalog
    }

    fn begin_session(&mut self, label: &str) -> Result<()> {
        if !self.open {
            return Err(closed());
        }
        self.script = self.root.join(format!("script_{label}.sql"));
        Ok(())
    }

    fn counters(&self) -> StorageCounters {
        StorageCounters::default()
    }

    fn is_open(&self) -> bool {
        self.open
    }

    fn close(&mut self) {
        self.open = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mini_lst_connections_share_storage() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ConnectionSpec::mini_lst(dir.path());
        let mut a = open("t", &spec).unwrap();
        let mut b = open("t", &spec).unwrap();
        assert!(a.catalog().tables().unwrap().is_empty());
        a.execute("CREATE TABLE t (k INT64) USING delta MODE cow KEY k TARGET 10")
            .unwrap();
        assert_eq!(b.catalog().tables().unwrap(), ["t"]);
        let r = b.execute("SELECT count(*) FROM t").unwrap();
        assert_eq!((r.row_count, r.scalar), (1, Some(0.0)));
        assert!(matches!(
            b.execute("SELECT * FROM missing"),
            Err(HarnessError::Engine(
                lsth_engine::EngineError::UnknownTable(_)
            ))
        ));
        b.close();
        assert!(b.execute("SELECT count(*) FROM t").is_err());
    }

    #[test]
    fn unreachable_root() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, b"x").unwrap();
        let err = open("t", &ConnectionSpec::mini_lst(file.join("sub")))
            .err()
            .unwrap();
        assert!(matches!(err, HarnessError::TargetUnreachable { .. }));
    }

    #[test]
    fn dry_run_records_script_and_versions() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = open("d", &ConnectionSpec::dry_run(dir.path())).unwrap();
        c.begin_session("p1_0").unwrap();
        let r = c
            .execute("CREATE TABLE t (k INT64) USING delta MODE cow KEY k TARGET 10")
            .unwrap();
        assert_eq!(r, StatementResult::default());
        c.execute("COPY INTO t FROM 'x.csv';").unwrap();
        c.execute("SELECT nonsense").unwrap();
        assert_eq!(c.current_version("t").unwrap(), 1);
        let script = fs::read_to_string(dir.path().join("script_p1_0.sql")).unwrap();
        assert_eq!(script.lines().count(), 3);
        assert!(script.ends_with("SELECT nonsense;\n"));
    }
}
