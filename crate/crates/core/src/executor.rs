//! Runs a workload: phases in order, the sessions of a phase concurrently,
//! the tasks and statements of a session in order.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Barrier, Condvar, Mutex};
use std::thread;
use std::time::Instant;

use chrono::{DateTime, Utc};
use lsth_engine::StorageCounters;
use serde::{Deserialize, Serialize};

use crate::connector::{self, Connection, ConnectionSpec};
use crate::error::{HarnessError, Result};
use crate::library::{
    substitute, DialectKey, Library, LstKey, StatementTemplate, TaskTemplate, DEFAULT_DIALECT,
};
use crate::package::ASOF_SOURCE;
use crate::prng::SplitMix64;
use crate::telemetry::{CounterSample, EventRecord, Status, TelemetrySink, SCHEMA_VERSION};
use crate::workload::{
    max_concurrency, GeneratorRef, Params, PhaseSpec, PhaseType, SessionSpec, TaskRef, WorkloadSpec,
};

/// Binding injected into every task once a table version has been recorded.
pub const ASOF_VERSION: &str = "asof_version";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailurePolicy {
    #[default]
    AbortExperiment,
    AbortSession,
    Continue,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub targets: BTreeMap<String, ConnectionSpec>,
    /// Lowest-precedence bindings.
    pub globals: Params,
    pub failure_policy: FailurePolicy,
    pub repetitions: u32,
    pub library: Library,
    /// Table whose version is recorded after each writing phase.
    pub tracked_table: String,
}

impl ExperimentConfig {
    pub fn new(experiment_id: &str, library: Library) -> Self {
        let globals = [
            ("dialect", DEFAULT_DIALECT),
            ("lst", "delta"),
            ("write_mode", "cow"),
            ("target_file_rows", "1000"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            experiment_id: experiment_id.to_string(),
            targets: BTreeMap::new(),
            globals,
            failure_policy: FailurePolicy::default(),
            repetitions: 1,
            library,
            tracked_table: "fact".to_string(),
        }
    }

    pub fn with_target(mut self, name: &str, spec: ConnectionSpec) -> Self {
        self.targets.insert(name.to_string(), spec);
        self
    }

    pub fn with_global(mut self, k: &str, v: impl ToString) -> Self {
        self.globals.insert(k.to_string(), v.to_string());
        self
    }
}

/// Timing envelope of one executed phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseRun {
    pub phase_id: String,
    pub phase_type: PhaseType,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub statements: usize,
    pub failures: usize,
}

/// One executed (or skipped) statement as planned, for determinism checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub phase_id: String,
    pub session_idx: usize,
    pub task_name: String,
    pub statement: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub experiment_id: String,
    pub phases: Vec<PhaseRun>,
    pub version_registry: BTreeMap<String, u64>,
    pub aborted: bool,
    pub failures: usize,
    pub pool_size: usize,
    /// Highest number of simultaneously checked-out connections per target.
    pub pool_high_water: BTreeMap<String, usize>,
    pub trace: Vec<TraceEntry>,
}

struct Pool {
    conns: Mutex<Vec<Box<dyn Connection>>>,
    available: Condvar,
    busy: AtomicUsize,
    high_water: AtomicUsize,
}

impl Pool {
    fn new(conns: Vec<Box<dyn Connection>>) -> Self {
        Self {
            conns: Mutex::new(conns),
            available: Condvar::new(),
            busy: AtomicUsize::new(0),
            high_water: AtomicUsize::new(0),
        }
    }

    fn acquire(&self) -> Box<dyn Connection> {
        let mut guard = self.conns.lock().expect("pool lock");
        loop {
            if let Some(c) = guard.pop() {
                let now = self.busy.fetch_add(1, Ordering::SeqCst) + 1;
                self.high_water.fetch_max(now, Ordering::SeqCst);
                return c;
            }
            guard = self.available.wait(guard).expect("pool lock");
        }
    }

    fn release(&self, conn: Box<dyn Connection>) {
        self.busy.fetch_sub(1, Ordering::SeqCst);
        self.conns.lock().expect("pool lock").push(conn);
        self.available.notify_one();
    }

    fn counters(&self) -> StorageCounters {
        self.conns
            .lock()
            .expect("pool lock")
            .iter()
            .fold(StorageCounters::default(), |acc, c| acc + c.counters())
    }
}

/// Monotonic clock anchored to one wall-clock reading, so wall timestamps
/// never disagree with measured durations.
#[derive(Clone, Copy)]
struct Clock {
    wall: DateTime<Utc>,
    mono: Instant,
}

impl Clock {
    fn new() -> Self {
        Self {
            wall: Utc::now(),
            mono: Instant::now(),
        }
    }

    fn at(&self, t: Instant) -> DateTime<Utc> {
        self.wall + chrono::Duration::from_std(t - self.mono).expect("elapsed time fits")
    }
}

struct Shared<'a> {
    experiment_id: &'a str,
    cfg: &'a ExperimentConfig,
    sink: &'a dyn TelemetrySink,
    clock: Clock,
    abort: AtomicBool,
    registry: &'a BTreeMap<String, u64>,
    workload_params: &'a Params,
}

#[derive(Default)]
struct SessionOutcome {
    statements: usize,
    failures: usize,
    trace: Vec<TraceEntry>,
    error: Option<HarnessError>,
}

/// A task ready to run: resolved statements plus the bindings to apply.
struct Resolved {
    name: String,
    statements: Vec<StatementTemplate>,
    bindings: Params,
    permute: Option<u64>,
}

fn merged(layers: &[&Params]) -> Params {
    let mut out = Params::new();
    for layer in layers {
        out.extend(layer.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
    out
}

fn dialect_key(bindings: &Params) -> DialectKey {
    DialectKey::new(
        bindings
            .get("dialect")
            .map_or(DEFAULT_DIALECT, String::as_str),
        bindings
            .get("lst")
            .map_or(LstKey::Generic, |s| LstKey::from_binding(s)),
    )
}

/// Values the run injects: the as-of version chosen by `asof_source`, or the
/// first recorded version.
fn injected(bindings: &Params, registry: &BTreeMap<String, u64>, order: &[String]) -> Params {
    let mut out = Params::new();
    let version = match bindings.get(ASOF_SOURCE) {
        Some(src) => registry.get(src).copied(),
        None => order.first().and_then(|p| registry.get(p)).copied(),
    };
    if let Some(v) = version {
        out.insert(ASOF_VERSION.to_string(), v.to_string());
    }
    out
}

fn substitute_params(params: &Params, bindings: &Params) -> Result<Params> {
    params
        .iter()
        .map(|(k, v)| Ok((k.clone(), substitute(&StatementTemplate::new(v), bindings)?)))
        .collect()
}

fn all_reads(statements: &[StatementTemplate]) -> bool {
    statements.iter().all(|s| {
        let head = strip_comments(&s.raw_text);
        head.get(..6)
            .is_some_and(|w| w.eq_ignore_ascii_case("select"))
    })
}

fn strip_comments(text: &str) -> &str {
    let mut t = text.trim_start();
    loop {
        if let Some(rest) = t.strip_prefix("--") {
            t = rest.split_once('\n').map_or("", |(_, r)| r).trim_start();
        } else if let Some(rest) = t.strip_prefix("/*") {
            t = rest.split_once("*/").map_or("", |(_, r)| r).trim_start();
        } else {
            return t;
        }
    }
}

fn resolve_task(
    task: &TaskRef,
    base: &Params,
    extra: &Params,
    phase_type: PhaseType,
    session_idx: usize,
    library: &Library,
    conn: &dyn Connection,
) -> Result<Vec<Resolved>> {
    let bindings = merged(&[base, &task.params, extra]);
    let templates: Vec<TaskTemplate> = match (&task.task_name, &task.generator) {
        (Some(name), _) => vec![library.resolve(name, &dialect_key(&bindings))?],
        (None, Some(g)) => {
            let g = GeneratorRef {
                name: g.name.clone(),
                params: substitute_params(&g.params, &bindings)?,
            };
            crate::workload::expand_custom_task(&g, conn.catalog())?
        }
        (None, None) => {
            return Err(HarnessError::Validation(
                "task without `task` or `generator`".into(),
            ))
        }
    };
    let permute = match task.permutation_seed {
        Some(seed) => Some(seed),
        None if phase_type == PhaseType::Throughput => Some(session_idx as u64),
        None => None,
    };
    Ok(templates
        .into_iter()
        .map(|t| Resolved {
            permute: permute.filter(|_| all_reads(&t.statements)),
            name: t.name,
            statements: t.statements,
            bindings: bindings.clone(),
        })
        .collect())
}

struct SessionRun<'s, 'a> {
    shared: &'s Shared<'a>,
    phase: &'a PhaseSpec,
    session_idx: usize,
    order: &'s [String],
}

impl SessionRun<'_, '_> {
    #[allow(clippy::too_many_arguments)]
    fn emit(
        &self,
        task_idx: usize,
        task_name: &str,
        statement_idx: usize,
        status: Status,
        start: Instant,
        duration_ns: i64,
        counters: StorageCounters,
        error_text: Option<String>,
    ) -> Result<()> {
        self.shared.sink.append_event(&EventRecord {
            v: SCHEMA_VERSION,
            experiment_id: self.shared.experiment_id.to_string(),
            phase_id: self.phase.id.clone(),
            phase_type: self.phase.phase_type,
            session_idx: self.session_idx,
            task_idx,
            task_name: task_name.to_string(),
            statement_idx,
            status,
            wall_start: self.shared.clock.at(start),
            duration_ns,
            counters,
            error_text,
        })
    }

    fn skip(
        &self,
        task_idx: usize,
        task_name: &str,
        statement_idx: usize,
        out: &mut SessionOutcome,
    ) -> Result<()> {
        out.statements += 1;
        self.emit(
            task_idx,
            task_name,
            statement_idx,
            Status::Skipped,
            Instant::now(),
            0,
            StorageCounters::default(),
            None,
        )
    }

    fn run(&self, session: &SessionSpec, conn: &mut dyn Connection) -> SessionOutcome {
        let mut out = SessionOutcome::default();
        if let Err(e) = self.run_inner(session, conn, &mut out) {
            out.error = Some(e);
        }
        out
    }

    fn run_inner(
        &self,
        session: &SessionSpec,
        conn: &mut dyn Connection,
        out: &mut SessionOutcome,
    ) -> Result<()> {
        let shared = self.shared;
        let policy = shared.cfg.failure_policy;
        let base = merged(&[
            &shared.cfg.globals,
            shared.workload_params,
            &self.phase.params,
            &session.params,
        ]);
        let mut session_aborted = shared.abort.load(Ordering::SeqCst);
        if !session_aborted {
            conn.begin_session(&format!("{}_{}", self.phase.id, self.session_idx))?;
        }
        let mut task_idx = 0;
        for task in &session.tasks {
            let extra = injected(&merged(&[&base, &task.params]), shared.registry, self.order);
            let resolved = resolve_task(
                task,
                &base,
                &extra,
                self.phase.phase_type,
                self.session_idx,
                &shared.cfg.library,
                &*conn,
            );
            let resolved = match resolved {
                Ok(r) => r,
                Err(e) if e.is_validation() || matches!(e, HarnessError::Io { .. }) => {
                    return Err(e)
                }
                Err(e) => {
                    // Unexpandable task: one failed record stands for it.
                    let name = task.label();
                    if session_aborted || shared.abort.load(Ordering::SeqCst) {
                        self.skip(task_idx, &name, 0, out)?;
                    } else {
                        out.statements += 1;
                        out.failures += 1;
                        self.emit(
                            task_idx,
                            &name,
                            0,
                            Status::Failure,
                            Instant::now(),
                            0,
                            StorageCounters::default(),
                            Some(e.to_string()),
                        )?;
                        match policy {
                            FailurePolicy::AbortExperiment => {
                                shared.abort.store(true, Ordering::SeqCst)
                            }
                            FailurePolicy::AbortSession => session_aborted = true,
                            FailurePolicy::Continue => {}
                        }
                    }
                    task_idx += 1;
                    continue;
                }
            };
            for r in resolved {
                let mut order: Vec<usize> = (0..r.statements.len()).collect();
                if let Some(seed) = r.permute {
                    SplitMix64::new(seed).shuffle(&mut order);
                }
                for &si in &order {
                    if session_aborted || shared.abort.load(Ordering::SeqCst) {
                        self.skip(task_idx, &r.name, si, out)?;
                        continue;
                    }
                    out.statements += 1;
                    let text = substitute(&r.statements[si], &r.bindings);
                    let start = Instant::now();
                    let result = text.as_ref().map_err(|e| e.to_string()).and_then(|sql| {
                        out.trace.push(TraceEntry {
                            phase_id: self.phase.id.clone(),
                            session_idx: self.session_idx,
                            task_name: r.name.clone(),
                            statement: sql.clone(),
                        });
                        conn.execute(sql).map_err(|e| e.to_string())
                    });
                    let duration = start.elapsed().as_nanos() as i64;
                    match result {
                        Ok(res) => self.emit(
                            task_idx,
                            &r.name,
                            si,
                            Status::Success,
                            start,
                            duration,
                            res.engine_counters_delta,
                            None,
                        )?,
                        Err(msg) => {
                            out.failures += 1;
                            self.emit(
                                task_idx,
                                &r.name,
                                si,
                                Status::Failure,
                                start,
                                duration,
                                StorageCounters::default(),
                                Some(msg),
                            )?;
                            match policy {
                                FailurePolicy::AbortExperiment => {
                                    shared.abort.store(true, Ordering::SeqCst)
                                }
                                FailurePolicy::AbortSession => session_aborted = true,
                                FailurePolicy::Continue => {}
                            }
                        }
                    }
                }
                task_idx += 1;
            }
        }
        Ok(())
    }
}

/// Runs `spec` once per repetition. With several repetitions each one gets
/// its own `rep_<r>` subdirectory under every target's storage root and an
/// experiment id suffixed with `#<r>`.
pub fn run_experiment(
    spec: &WorkloadSpec,
    cfg: &ExperimentConfig,
    sink: &dyn TelemetrySink,
) -> Result<Vec<ExperimentResult>> {
    if cfg.repetitions < 1 {
        return Err(HarnessError::Config("repetitions must be >= 1".into()));
    }
    for t in spec.targets() {
        if !cfg.targets.contains_key(t) {
            return Err(HarnessError::Validation(format!(
                "workload references unknown target {t}"
            )));
        }
    }
    crate::workload::validate(spec, &cfg.library)?;
    (0..cfg.repetitions)
        .map(|r| {
            if cfg.repetitions == 1 {
                return run_once(spec, cfg, &cfg.experiment_id, &cfg.targets, sink);
            }
            let targets = cfg
                .targets
                .iter()
                .map(|(k, s)| {
                    let mut s = s.clone();
                    s.storage_root = s.storage_root.map(|p: PathBuf| p.join(format!("rep_{r}")));
                    (k.clone(), s)
                })
                .collect();
            run_once(
                spec,
                cfg,
                &format!("{}#{r}", cfg.experiment_id),
                &targets,
                sink,
            )
        })
        .collect()
}

fn run_once(
    spec: &WorkloadSpec,
    cfg: &ExperimentConfig,
    experiment_id: &str,
    targets: &BTreeMap<String, ConnectionSpec>,
    sink: &dyn TelemetrySink,
) -> Result<ExperimentResult> {
    let pool_size = max_concurrency(spec);
    let mut pools = BTreeMap::new();
    for name in spec.targets() {
        let conns = connector::open_pool(name, &targets[name], pool_size)?;
        pools.insert(name.to_string(), Pool::new(conns));
    }
    let mut registry = BTreeMap::new();
    let mut recorded: Vec<String> = Vec::new();
    let mut result = ExperimentResult {
        experiment_id: experiment_id.to_string(),
        pool_size,
        ..Default::default()
    };
    let clock = Clock::new();
    let mut aborted = false;
    for phase in &spec.phases {
        let shared = Shared {
            experiment_id,
            cfg,
            sink,
            clock,
            abort: AtomicBool::new(aborted),
            registry: &registry,
            workload_params: &spec.params,
        };
        let barrier = Barrier::new(phase.sessions.len());
        let start = Instant::now();
        let outcomes: Vec<SessionOutcome> = thread::scope(|scope| {
            let handles: Vec<_> = phase
                .sessions
                .iter()
                .enumerate()
                .map(|(idx, session)| {
                    let pool = &pools[&session.target];
                    let shared = &shared;
                    let barrier = &barrier;
                    let order = &recorded;
                    scope.spawn(move || {
                        let mut conn = pool.acquire();
                        barrier.wait();
                        let run = SessionRun {
                            shared,
                            phase,
                            session_idx: idx,
                            order,
                        };
                        let out = run.run(session, conn.as_mut());
                        pool.release(conn);
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("session thread"))
                .collect()
        });
        let end = Instant::now();
        aborted = shared.abort.load(Ordering::SeqCst);
        let mut run = PhaseRun {
            phase_id: phase.id.clone(),
            phase_type: phase.phase_type,
            start: clock.at(start),
            end: clock.at(end),
            statements: 0,
            failures: 0,
        };
        for out in outcomes {
            if let Some(e) = out.error {
                return Err(e);
            }
            run.statements += out.statements;
            run.failures += out.failures;
            result.trace.extend(out.trace);
        }
        result.failures += run.failures;
        result.phases.push(run);
        for (name, pool) in &pools {
            sink.append_sample(&CounterSample {
                v: SCHEMA_VERSION,
                source: name.clone(),
                wall_time: clock.at(Instant::now()),
                counters: pool.counters(),
            })?;
        }
        let writes = matches!(
            phase.phase_type,
            PhaseType::Load | PhaseType::DataMaintenance | PhaseType::Optimize
        );
        if writes && !aborted {
            let target = phase
                .sessions
                .iter()
                .find(|s| {
                    s.tasks
                        .iter()
                        .any(|t| t.task_name.as_deref() != Some("single_user"))
                })
                .unwrap_or(&phase.sessions[0])
                .target
                .as_str();
            let pool = &pools[target];
            let mut conn = pool.acquire();
            let version = conn.current_version(&cfg.tracked_table);
            pool.release(conn);
            if let Ok(v) = version {
                registry.insert(phase.id.clone(), v);
                recorded.push(phase.id.clone());
            }
        }
    }
    result.aborted = aborted;
    result.version_registry = registry;
    result.pool_high_water = pools
        .iter()
        .map(|(k, p)| (k.clone(), p.high_water.load(Ordering::SeqCst)))
        .collect();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::MemorySink;
    use crate::workload::parse_document;

    fn library(dir: &std::path::Path) -> Library {
        let root = dir.join("lib");
        for (task, files) in [
            ("mk", vec![("01.sql", "CREATE TABLE t (k INT64) USING ${lst} MODE cow KEY k TARGET 10;")]),
            ("q", vec![("01.sql", "SELECT count(*) FROM t; SELECT count(*) FROM t AS OF VERSION ${asof_version};\nSELECT k FROM t")]),
            ("bad", vec![("01.sql", "SELECT FROM;")]),
        ] {
            let d = root.join(task).join("minisql").join("generic");
            std::fs::create_dir_all(&d).unwrap();
            for (f, body) in files {
                std::fs::write(d.join(f), body).unwrap();
            }
        }
        Library::open(root).unwrap()
    }

    fn config(dir: &std::path::Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new("x", library(dir))
            .with_target("default", ConnectionSpec::mini_lst(dir.join("store")));
        cfg.tracked_table = "t".into();
        cfg
    }

    const DOC: &str = "
id: t
phases:
  - id: load
    type: LOAD
    sessions: [{tasks: [{task: mk}]}]
  - id: bad
    type: CUSTOM
    sessions: [{tasks: [{task: bad}]}, {tasks: [{task: q}]}]
  - id: after
    type: SINGLE_USER
    sessions: [{tasks: [{task: q}]}]
";

    #[test]
    fn abort_experiment_skips_the_rest() {
        let dir = tempfile::tempdir().unwrap();
        let sink = MemorySink::new();
        let spec = parse_document(DOC).unwrap();
        let res = run_experiment(&spec, &config(dir.path()), &sink)
            .unwrap()
            .remove(0);
        assert!(res.aborted);
        assert_eq!(res.version_registry["load"], 0);
        let events = sink.events();
        assert_eq!(events.len(), 1 + 1 + 3 + 3);
        let later: Vec<_> = events.iter().filter(|e| e.phase_id == "after").collect();
        assert!(later.iter().all(|e| e.status == Status::Skipped));
        assert_eq!(
            events
                .iter()
                .filter(|e| e.status == Status::Failure)
                .count(),
            1
        );
    }

    #[test]
    fn continue_policy_runs_everything() {
        let dir = tempfile::tempdir().unwrap();
        let sink = MemorySink::new();
        let mut cfg = config(dir.path());
        cfg.failure_policy = FailurePolicy::Continue;
        let spec = parse_document(DOC).unwrap();
        let res = run_experiment(&spec, &cfg, &sink).unwrap().remove(0);
        assert!(!res.aborted);
        assert_eq!(res.failures, 1);
        let after: Vec<_> = sink
            .events()
            .into_iter()
            .filter(|e| e.phase_id == "after")
            .collect();
        assert_eq!(after.len(), 3);
        assert!(after.iter().all(|e| e.status == Status::Success));
        assert_eq!(res.pool_size, 2);
        assert!(res.pool_high_water["default"] <= 2);
        assert_eq!(sink.samples().len(), 3);
    }

    #[test]
    fn unknown_target_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        cfg.targets.clear();
        let spec = parse_document(DOC).unwrap();
        assert!(run_experiment(&spec, &cfg, &MemorySink::new())
            .unwrap_err()
            .is_validation());
    }

    #[test]
    fn unreachable_target() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, "").unwrap();
        let cfg = ExperimentConfig::new("x", library(dir.path()))
            .with_target("default", ConnectionSpec::mini_lst(file.join("x")));
        let spec = parse_document(DOC).unwrap();
        assert!(matches!(
            run_experiment(&spec, &cfg, &MemorySink::new()),
            Err(HarnessError::TargetUnreachable { .. })
        ));
    }

    #[test]
    fn permutation_only_for_reads() {
        let reads = [
            StatementTemplate::new("-- c\nselect 1"),
            StatementTemplate::new("SELECT 2"),
        ];
        assert!(all_reads(&reads));
        assert!(!all_reads(&[StatementTemplate::new("OPTIMIZE t")]));
        assert_eq!(strip_comments("/* a */ -- b\n x"), "x");
    }

    #[test]
    fn injection_prefers_asof_source() {
        let registry = BTreeMap::from([("load".to_string(), 1), ("dm_1".to_string(), 2)]);
        let order = vec!["load".to_string(), "dm_1".to_string()];
        let b = Params::from([(ASOF_SOURCE.to_string(), "dm_1".to_string())]);
        assert_eq!(injected(&b, &registry, &order)[ASOF_VERSION], "2");
        assert_eq!(
            injected(&Params::new(), &registry, &order)[ASOF_VERSION],
            "1"
        );
        assert!(injected(&Params::new(), &BTreeMap::new(), &[]).is_empty());
    }
}
