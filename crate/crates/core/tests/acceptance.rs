mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use lsth_core::connector::ConnectionSpec;
use lsth_core::datagen::{fact_rows, refresh_rows, FactRow, GenSpec, RefreshOp};
use lsth_core::executor::{run_experiment, ExperimentConfig, TraceEntry};
use lsth_core::metrics::{aggregate_all, degradation_rate, series_by_phase_type, Direction};
use lsth_core::package::{build_package, refreshes_needed, PackageConfig, PackageId};
use lsth_core::{EventRecord, MemorySink, PhaseType, Status};
use lsth_engine::{
    iceberg_manifest_count, ColumnType, Engine, Layout, Predicate, Row, Schema, TableDescriptor,
    Value, WriteMode,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

const LAYOUTS: [Layout; 3] = [Layout::DeltaStyle, Layout::IcebergStyle, Layout::HudiStyle];
const MODES: [WriteMode; 2] = [WriteMode::Cow, WriteMode::Mor];

fn schema() -> Schema {
    Schema::new([
        ("k", ColumnType::Int64),
        ("v", ColumnType::Decimal),
        ("tag", ColumnType::String),
    ])
}

fn desc(layout: Layout, mode: WriteMode, target: u64) -> TableDescriptor {
    TableDescriptor::new("t", schema(), layout, mode, "k", target)
}

fn row(k: i64, v: i64) -> Row {
    vec![
        Value::Int(k),
        Value::Decimal(v),
        Value::Str(format!("g{}", k % 5)),
    ]
}

fn scan_sorted(e: &Engine, table: &str, asof: Option<u64>) -> Result<Vec<Row>, String> {
    let mut rows = e
        .scan(table, &Predicate::all(), asof)
        .map_err(|e| e.to_string())?
        .value
        .rows;
    rows.sort();
    Ok(rows)
}

fn criterion_1() -> Result<String, String> {
    let start = Instant::now();
    let v = degradation_rate(
        &[47.0, 75.0, 106.0, 131.0, 163.0, 157.0],
        Direction::LowerBetter,
    )
    .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure!((v - 0.2905).abs() <= 0.0005, "S_DR = {v}");
    ensure!(took < Duration::from_millis(1), "took {took:?}");
    Ok(format!("S_DR = {v:.6}"))
}

fn criterion_2() -> Result<String, String> {
    const CASES: usize = 1000;
    let mut rng = StdRng::seed_from_u64(2);
    let sdr = |v: &[f64], d| degradation_rate(v, d).map_err(|e| e.to_string());
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    for i in 0..CASES {
        let len = rng.gen_range(2..16);
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(1e-3..1e6)).collect();
        let base = sdr(&values, Direction::LowerBetter)?;

        let c = rng.gen_range(1e-3..1e3);
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        ensure!(
            close(base, sdr(&scaled, Direction::LowerBetter)?),
            "scale invariance, case {i}"
        );

        let mut up = values.clone();
        up.sort_by(f64::total_cmp);
        up.dedup();
        if up.len() >= 2 {
            ensure!(
                sdr(&up, Direction::LowerBetter)? > 0.0,
                "increasing series, case {i}"
            );
            up.reverse();
            ensure!(
                sdr(&up, Direction::LowerBetter)? < 0.0,
                "decreasing series, case {i}"
            );
        }

        let recip: Vec<f64> = values.iter().map(|v| 1.0 / v).collect();
        ensure!(
            close(
                sdr(&values, Direction::HigherBetter)?,
                sdr(&recip, Direction::LowerBetter)?
            ),
            "reciprocal duality, case {i}"
        );

        let constant = vec![values[0]; len];
        ensure!(
            sdr(&constant, Direction::LowerBetter)? == 0.0,
            "constant series, case {i}"
        );
    }
    Ok(format!("{CASES} series per property"))
}

fn package_run(
    id: PackageId,
    pkg: &PackageConfig,
    lst: &str,
    mode: &str,
    rows: u64,
    target: u64,
) -> Result<common::PackageRun, String> {
    let run = common::run_package(id, pkg, lst, mode, rows, target);
    if let Some(e) = run.events.iter().find(|e| e.status != Status::Success) {
        return Err(format!(
            "{} {}: {:?}",
            e.phase_id, e.task_name, e.error_text
        ));
    }
    Ok(run)
}

fn su_files_opened(events: &[EventRecord]) -> Vec<(String, u64)> {
    aggregate_all(events)
        .into_iter()
        .filter(|a| a.phase_type == PhaseType::SingleUser)
        .map(|a| (a.phase_id, a.counters.files_opened))
        .collect()
}

fn criterion_3() -> Result<String, String> {
    let pkg = PackageConfig::default();
    ensure!(
        refreshes_needed(PackageId::W1, &pkg) == 5,
        "W1 should consume 5 refreshes"
    );
    let run = package_run(PackageId::W1, &pkg, "delta", "cow", 5000, 1000)?;
    let su = su_files_opened(&run.events);
    ensure!(su.len() == 6, "{} single-user phases", su.len());
    let values: Vec<u64> = su.iter().map(|(_, v)| *v).collect();
    ensure!(
        values.windows(2).all(|w| w[1] > w[0]),
        "files_opened not strictly increasing: {values:?}"
    );
    let series = series_by_phase_type(&run.events);
    let s = series
        .iter()
        .find(|s| s.phase_type == PhaseType::SingleUser && s.metric_name == "files_opened")
        .ok_or("missing series")?;
    let sdr = s.degradation_rate().map_err(|e| e.to_string())?;
    ensure!(sdr > 0.0, "S_DR(files_opened) = {sdr}");
    Ok(format!("files_opened {values:?}, S_DR = {sdr:.4}"))
}

fn criterion_4() -> Result<String, String> {
    let mut notes = Vec::new();
    for lst in ["hudi", "iceberg"] {
        let run = package_run(
            PackageId::W2,
            &PackageConfig::default(),
            lst,
            "mor",
            5000,
            1000,
        )?;
        let su: BTreeMap<String, u64> = su_files_opened(&run.events).into_iter().collect();
        let baseline = su["su_0"] as f64;
        let engine = Engine::open(&run.setup.store).map_err(|e| e.to_string())?;
        let mut after = Vec::new();
        for i in 1..=PackageConfig::default().k {
            let v = su[&format!("su_{i}b")];
            ensure!(
                v as f64 <= 1.1 * baseline,
                "{lst}: su_{i}b opened {v} files, baseline {baseline}"
            );
            let version = run.result.version_registry[&format!("o_{i}")];
            let snap = engine
                .read_metadata("fact", Some(version))
                .map_err(|e| e.to_string())?
                .value;
            ensure!(
                snap.pending_delta_count() == 0,
                "{lst}: pending deltas after o_{i}"
            );
            after.push(v);
        }
        notes.push(format!(
            "{lst}-mor baseline {baseline} post-optimize {after:?}"
        ));
    }
    Ok(notes.join("; "))
}

/// Metadata files a read of the latest snapshot must open.
fn expected_metadata_opens(e: &Engine, layout: Layout, version: u64, interval: u64) -> u64 {
    match layout {
        Layout::DeltaStyle => {
            let last_cp = (version / interval) * interval;
            if last_cp == 0 {
                version + 1
            } else {
                1 + (version - last_cp)
            }
        }
        Layout::HudiStyle => 1,
        Layout::IcebergStyle => 2 + iceberg_manifest_count(e.root(), "t", version).unwrap() as u64,
    }
}

fn fact_schema() -> Schema {
    Schema::new([
        ("key", ColumnType::Int64),
        ("dim1_fk", ColumnType::Int64),
        ("dim2_fk", ColumnType::Int64),
        ("amount", ColumnType::Decimal),
        ("event_date", ColumnType::Date),
    ])
}

fn fact_row(k: i64, cents: i64) -> Row {
    let day =
        chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(k % 365);
    vec![
        Value::Int(k),
        Value::Int(1 + k % 10),
        Value::Int(1 + k % 7),
        Value::Decimal(cents),
        Value::Date(day),
    ]
}

/// Every layout must match the counting oracle. The byte ratio is asserted
/// on the delta-style layout and the open-count identity on delta- and
/// hudi-style; iceberg-style tracks the delta in an extra manifest.
fn criterion_5() -> Result<String, String> {
    let mut notes = Vec::new();
    for layout in LAYOUTS {
        let mut written = BTreeMap::new();
        let mut opened = BTreeMap::new();
        for mode in MODES {
            let dir = tempfile::tempdir().unwrap();
            let e = Engine::open(dir.path()).map_err(|e| e.to_string())?;
            let d = TableDescriptor::new("t", fact_schema(), layout, mode, "key", 100);
            let interval = d.checkpoint_interval;
            e.create_table(d).map_err(|e| e.to_string())?;
            e.load_append("t", (1..=100).map(|k| fact_row(k, k * 137)).collect())
                .map_err(|e| e.to_string())?;
            let up = e
                .merge("t", vec![fact_row(42, 1)], vec![])
                .map_err(|e| e.to_string())?;
            written.insert(mode.keyword(), up.counters.bytes_written);
            let before = e.counters();
            let scan = e
                .scan("t", &Predicate::all(), None)
                .map_err(|e| e.to_string())?;
            let global = e.counters().files_opened - before.files_opened;
            let snap = e.read_metadata("t", None).map_err(|e| e.to_string())?.value;
            let deltas = snap.pending_delta_count() as u64;
            let oracle = expected_metadata_opens(&e, layout, snap.version, interval)
                + snap.live_files.len() as u64
                + deltas;
            ensure!(
                scan.counters.files_opened == oracle && global == oracle,
                "{layout:?} {mode:?}: scan opened {} (global {global}), oracle {oracle}",
                scan.counters.files_opened
            );
            ensure!(
                snap.live_files.len() == 1,
                "{layout:?} {mode:?}: {} base files",
                snap.live_files.len()
            );
            ensure!(
                scan.value.rows.len() == 100,
                "{layout:?} {mode:?}: row count"
            );
            opened.insert(mode.keyword(), (scan.counters.files_opened, deltas));
        }
        let (cow, mor) = (written["cow"], written["mor"]);
        let ratio = mor as f64 / cow as f64;
        if layout == Layout::DeltaStyle {
            ensure!(ratio < 0.25, "{layout:?}: MoR wrote {mor} bytes, CoW {cow}");
        }
        let ((cow_open, cow_d), (mor_open, mor_d)) = (opened["cow"], opened["mor"]);
        ensure!(
            cow_d == 0 && mor_d == 1,
            "{layout:?}: pending deltas cow {cow_d} mor {mor_d}"
        );
        if layout != Layout::IcebergStyle {
            ensure!(
                mor_open == cow_open + mor_d,
                "{layout:?}: MoR opened {mor_open}, CoW {cow_open}"
            );
        }
        notes.push(format!(
            "{layout:?} bytes ratio {ratio:.3} opens mor {mor_open} cow {cow_open} deltas {mor_d}"
        ));
    }
    Ok(notes.join("; "))
}

fn fold(state: &mut BTreeMap<u64, FactRow>, ops: &[(RefreshOp, FactRow)]) {
    for (op, r) in ops {
        match op {
            RefreshOp::Delete => {
                state.remove(&r.key);
            }
            _ => {
                state.insert(r.key, r.clone());
            }
        }
    }
}

fn as_rows(state: &BTreeMap<u64, FactRow>) -> Vec<Row> {
    let mut rows: Vec<Row> = state
        .values()
        .map(|r| {
            vec![
                Value::Int(r.key as i64),
                Value::Int(r.dim1_fk as i64),
                Value::Int(r.dim2_fk as i64),
                Value::Decimal(r.amount),
                Value::Date(r.event_date),
            ]
        })
        .collect();
    rows.sort();
    rows
}

fn criterion_6() -> Result<String, String> {
    const ROWS: u64 = 2000;
    let pkg = PackageConfig {
        k: 3,
        ..Default::default()
    };
    let mut checked = 0;
    for lst in ["delta", "iceberg", "hudi"] {
        for mode in ["cow", "mor"] {
            let run = package_run(PackageId::W4, &pkg, lst, mode, ROWS, 250)?;
            let gen = GenSpec::new(ROWS, 42).with_refreshes(pkg.k);
            let mut state: BTreeMap<u64, FactRow> =
                fact_rows(&gen).into_iter().map(|r| (r.key, r)).collect();
            let mut expected = vec![("load".to_string(), as_rows(&state))];
            for j in 1..=pkg.k {
                fold(
                    &mut state,
                    &refresh_rows(&gen, j).map_err(|e| e.to_string())?,
                );
                expected.push((format!("dm_{j}"), as_rows(&state)));
            }
            let engine = Engine::open(&run.setup.store).map_err(|e| e.to_string())?;
            let latest = engine.current_version("fact").map_err(|e| e.to_string())?;
            for (phase, rows) in &expected {
                let v = run.result.version_registry[phase];
                ensure!(
                    latest > v || phase == &format!("dm_{}", pkg.k),
                    "no later commits after {phase}"
                );
                let got = scan_sorted(&engine, "fact", Some(v))?;
                ensure!(
                    &got == rows,
                    "{lst}-{mode}: AS OF {v} ({phase}) differs: {} vs {} rows",
                    got.len(),
                    rows.len()
                );
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} versions match the datagen fold"))
}

fn criterion_7() -> Result<String, String> {
    const REPS: u64 = 50;
    let mut rng = StdRng::seed_from_u64(7);
    for rep in 0..REPS {
        let layout = LAYOUTS[(rep % 3) as usize];
        let dir = tempfile::tempdir().unwrap();
        let a = Engine::open(dir.path()).map_err(|e| e.to_string())?;
        let b = Engine::open(dir.path()).map_err(|e| e.to_string())?;
        a.create_table(desc(layout, WriteMode::Cow, 50))
            .map_err(|e| e.to_string())?;
        a.load_append("t", (0..10).map(|k| row(k, 0)).collect())
            .map_err(|e| e.to_string())?;
        let base = b.current_version("t").map_err(|e| e.to_string())?;
        let delays: Vec<u64> = (0..4).map(|_| rng.gen_range(0..2000)).collect();
        let barrier = Barrier::new(4);
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..4i64)
                .map(|i| {
                    let engine = if i % 2 == 0 { &a } else { &b };
                    let (barrier, delay) = (&barrier, delays[i as usize]);
                    s.spawn(move || {
                        barrier.wait();
                        std::thread::sleep(Duration::from_micros(delay));
                        engine.load_append("t", (0..5).map(|j| row(100 * (i + 1) + j, i)).collect())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in results {
            r.map_err(|e| format!("rep {rep}: append failed: {e}"))?;
        }
        let latest = a.current_version("t").map_err(|e| e.to_string())?;
        ensure!(
            latest == base + 4,
            "rep {rep}: final version {latest}, base {base}"
        );
        for v in 1..=latest {
            let entry = a
                .read_commit("t", v)
                .map_err(|e| e.to_string())?
                .ok_or(format!("rep {rep}: gap at {v}"))?;
            ensure!(
                entry.parent_version == Some(v - 1),
                "rep {rep}: v{v} parent {:?}",
                entry.parent_version
            );
        }
        let mut expect: Vec<Row> = (0..10).map(|k| row(k, 0)).collect();
        for i in 0..4i64 {
            expect.extend((0..5).map(|j| row(100 * (i + 1) + j, i)));
        }
        expect.sort();
        ensure!(
            scan_sorted(&b, "t", None)? == expect,
            "rep {rep}: rows differ"
        );
    }

    let mut pairs = 0;
    for layout in LAYOUTS {
        for mode in MODES {
            let dir = tempfile::tempdir().unwrap();
            let a = Engine::open(dir.path()).map_err(|e| e.to_string())?;
            let b = Engine::open(dir.path()).map_err(|e| e.to_string())?;
            a.create_table(desc(layout, mode, 100))
                .map_err(|e| e.to_string())?;
            a.load_append("t", (1..=20).map(|k| row(k, 0)).collect())
                .map_err(|e| e.to_string())?;
            let p1 = a
                .begin_merge("t", vec![row(3, 1)], vec![])
                .map_err(|e| e.to_string())?
                .value;
            let p2 = b
                .begin_merge("t", vec![row(4, 2)], vec![])
                .map_err(|e| e.to_string())?
                .value;
            let barrier = Barrier::new(2);
            let outcomes: Vec<_> = std::thread::scope(|s| {
                let h1 = s.spawn(|| {
                    barrier.wait();
                    a.commit_pending(p1)
                });
                let h2 = s.spawn(|| {
                    barrier.wait();
                    b.commit_pending(p2)
                });
                vec![h1.join().unwrap(), h2.join().unwrap()]
            });
            let ok = outcomes.iter().filter(|o| o.is_ok()).count();
            let conflicts = outcomes
                .iter()
                .filter(|o| o.as_ref().is_err_and(|e| e.is_conflict()))
                .count();
            ensure!(
                ok == 1 && conflicts == 1,
                "{layout:?} {mode:?}: {ok} ok, {conflicts} conflicts"
            );
            pairs += 1;
        }
    }
    Ok(format!("{REPS} append races, {pairs} merge races"))
}

fn criterion_8() -> Result<String, String> {
    const TABLES: usize = 200;
    let mut rng = StdRng::seed_from_u64(8);
    for i in 0..TABLES {
        let layout = LAYOUTS[i % 3];
        let mode = MODES[(i / 3) % 2];
        let dir = tempfile::tempdir().unwrap();
        let e = Engine::open(dir.path()).map_err(|e| e.to_string())?;
        e.create_table(desc(layout, mode, rng.gen_range(5..80)))
            .map_err(|e| e.to_string())?;
        let mut model: BTreeMap<i64, Row> = BTreeMap::new();
        let n = rng.gen_range(0..=300);
        let base: Vec<Row> = (0..n).map(|k| row(k, rng.gen_range(0..1000))).collect();
        for r in &base {
            model.insert(k_of(r), r.clone());
        }
        e.load_append("t", base).map_err(|err| err.to_string())?;
        for _ in 0..rng.gen_range(1..6) {
            let ups: BTreeMap<i64, Row> = (0..rng.gen_range(0..20))
                .map(|_| {
                    let k = rng.gen_range(0..400);
                    (k, row(k, rng.gen_range(0..1000)))
                })
                .collect();
            let dels: Vec<i64> = (0..rng.gen_range(0..10))
                .map(|_| rng.gen_range(0..400))
                .filter(|k| !ups.contains_key(k))
                .collect();
            for k in &dels {
                model.remove(k);
            }
            model.extend(ups.clone());
            let del_vals = dels.iter().map(|k| Value::Int(*k)).collect();
            e.merge("t", ups.into_values().collect(), del_vals)
                .map_err(|err| err.to_string())?;
        }
        ensure!(model.len() <= 500, "table {i} too large");
        let expect: Vec<Row> = model.values().cloned().collect();
        let before = scan_sorted(&e, "t", None)?;
        ensure!(
            before == expect,
            "table {i} ({layout:?} {mode:?}): scan differs from model before optimize"
        );
        e.optimize("t").map_err(|err| err.to_string())?;
        ensure!(
            scan_sorted(&e, "t", None)? == before,
            "table {i} ({layout:?} {mode:?}): optimize changed rows"
        );
        e.vacuum("t", 1).map_err(|err| err.to_string())?;
        let current = e.current_version("t").map_err(|err| err.to_string())?;
        let prev = scan_sorted(&e, "t", Some(current - 1)).map_err(|err| {
            format!("table {i} ({layout:?} {mode:?}): AS OF current-1 broke: {err}")
        })?;
        ensure!(prev == before, "table {i}: AS OF current-1 rows differ");
    }
    Ok(format!("{TABLES} tables"))
}

fn k_of(r: &Row) -> i64 {
    match r[0] {
        Value::Int(k) => k,
        _ => unreachable!(),
    }
}

fn criterion_9() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(dir.path()).map_err(|e| e.to_string())?;
    let d = desc(Layout::DeltaStyle, WriteMode::Cow, 10);
    ensure!(
        d.checkpoint_interval == 10,
        "checkpoint interval {}",
        d.checkpoint_interval
    );
    e.create_table(d).map_err(|e| e.to_string())?;
    for i in 0..25 {
        e.load_append("t", vec![row(i, i)])
            .map_err(|e| e.to_string())?;
    }
    let before = e.counters();
    let out = e.read_metadata("t", None).map_err(|e| e.to_string())?;
    let delta = e.counters().files_opened - before.files_opened;
    ensure!(out.value.version == 25, "version {}", out.value.version);
    ensure!(
        out.opens.metadata == 6 && delta == 6 && out.counters.files_opened == 6,
        "delta-style opened {delta} metadata files"
    );
    let meta = dir.path().join("t").join("meta");
    let checkpoints = std::fs::read_dir(&meta)
        .map_err(|e| e.to_string())?
        .filter(|f| {
            f.as_ref()
                .is_ok_and(|f| f.file_name().to_string_lossy().ends_with(".checkpoint"))
        })
        .count();
    ensure!(checkpoints == 2, "{checkpoints} checkpoints on disk");

    let mut notes = vec!["delta 1+5".to_string()];
    for layout in [Layout::HudiStyle, Layout::IcebergStyle] {
        let dir = tempfile::tempdir().unwrap();
        let e = Engine::open(dir.path()).map_err(|e| e.to_string())?;
        e.create_table(desc(layout, WriteMode::Mor, 10))
            .map_err(|e| e.to_string())?;
        e.load_append("t", (1..=30).map(|k| row(k, k)).collect())
            .map_err(|e| e.to_string())?;
        e.merge("t", vec![row(2, 0)], vec![Value::Int(7)])
            .map_err(|e| e.to_string())?;
        e.load_append("t", (40..=45).map(|k| row(k, k)).collect())
            .map_err(|e| e.to_string())?;
        for v in 0..=3 {
            let before = e.counters();
            let out = e
                .scan("t", &Predicate::all(), Some(v))
                .map_err(|e| e.to_string())?;
            let global = e.counters() - before;
            let (lists, meta) = match layout {
                Layout::HudiStyle => (1, 1),
                _ => (
                    1,
                    2 + iceberg_manifest_count(e.root(), "t", v).map_err(|e| e.to_string())? as u64,
                ),
            };
            let data = out.opens.data + out.opens.delta;
            ensure!(
                out.opens.metadata == meta
                    && global.list_calls == lists
                    && global.files_opened == meta + data,
                "{layout:?} v{v}: metadata {} (want {meta}), lists {}, opened {}",
                out.opens.metadata,
                global.list_calls,
                global.files_opened
            );
        }
        notes.push(format!("{layout:?} ok"));
    }
    Ok(notes.join(", "))
}

fn criterion_10() -> Result<String, String> {
    let pkg = PackageConfig {
        k: 2,
        ..Default::default()
    };
    let run = package_run(PackageId::W3, &pkg, "delta", "mor", 2000, 250)?;
    let events = &run.events;
    let order: Vec<&str> = run.spec.phases.iter().map(|p| p.id.as_str()).collect();
    let span = |id: &str| {
        let e: Vec<&EventRecord> = events.iter().filter(|e| e.phase_id == id).collect();
        (
            e.iter().map(|e| e.start_ns()).min().unwrap(),
            e.iter().map(|e| e.end_ns()).max().unwrap(),
        )
    };
    for w in order.windows(2) {
        ensure!(
            span(w[1]).0 >= span(w[0]).1,
            "phase {} starts before {} ends",
            w[1],
            w[0]
        );
    }
    let mut sessions: BTreeMap<(&str, usize), Vec<&EventRecord>> = BTreeMap::new();
    for e in events {
        sessions
            .entry((e.phase_id.as_str(), e.session_idx))
            .or_default()
            .push(e);
    }
    for ((phase, s), list) in sessions.iter_mut() {
        list.sort_by_key(|e| e.start_ns());
        ensure!(
            list.windows(2).all(|w| w[1].start_ns() >= w[0].end_ns()),
            "{phase}/{s} overlaps itself"
        );
    }
    let bound = lsth_core::workload::max_concurrency(&run.spec);
    let high = run.result.pool_high_water["default"];
    ensure!(high <= bound, "pool high water {high} > {bound}");
    let mut overlaps = 0;
    for p in run.spec.phases.iter().filter(|p| p.sessions.len() == 2) {
        let (a0, a1) = (
            sessions[&(p.id.as_str(), 0)].first().unwrap().start_ns(),
            sessions[&(p.id.as_str(), 0)]
                .iter()
                .map(|e| e.end_ns())
                .max()
                .unwrap(),
        );
        let (b0, b1) = (
            sessions[&(p.id.as_str(), 1)].first().unwrap().start_ns(),
            sessions[&(p.id.as_str(), 1)]
                .iter()
                .map(|e| e.end_ns())
                .max()
                .unwrap(),
        );
        ensure!(a0.max(b0) < a1.min(b1), "no overlap in {}", p.id);
        overlaps += 1;
    }
    ensure!(
        overlaps == 2 * pkg.k as usize,
        "{overlaps} overlapping phases"
    );

    let spec = build_package(PackageId::W3, &pkg).map_err(|e| e.to_string())?;
    let mut traces: Vec<Vec<TraceEntry>> = Vec::new();
    for i in 0..3 {
        let root = run.setup.dir.path().join(format!("dry_{i}"));
        let cfg = ExperimentConfig::new("dry", run.setup.library.clone())
            .with_target("default", ConnectionSpec::dry_run(&root))
            .with_global("data_dir", "/data")
            .with_global("seed", 42);
        let res = run_experiment(&spec, &cfg, &MemorySink::new())
            .map_err(|e| e.to_string())?
            .remove(0);
        traces.push(res.trace);
    }
    ensure!(
        traces[0] == traces[1] && traces[1] == traces[2],
        "dry-run traces differ"
    );
    Ok(format!(
        "{overlaps} overlapping phases, pool high water {high}/{bound}, {} dry-run statements",
        traces[0].len()
    ))
}

fn main() {
    let criteria: [(&str, Check, Duration); 10] = [
        (
            "S_DR of the worked series",
            criterion_1,
            Duration::from_millis(1),
        ),
        ("metric property suite", criterion_2, Duration::from_secs(5)),
        (
            "degradation mechanism (W1)",
            criterion_3,
            Duration::from_secs(60),
        ),
        (
            "resilience after optimize (W2)",
            criterion_4,
            Duration::from_secs(90),
        ),
        ("CoW/MoR trade-off", criterion_5, Duration::from_secs(5)),
        ("time travel (W4)", criterion_6, Duration::from_secs(60)),
        ("concurrency", criterion_7, Duration::from_secs(60)),
        (
            "compaction equivalence",
            criterion_8,
            Duration::from_secs(120),
        ),
        (
            "layout metadata accounting",
            criterion_9,
            Duration::from_secs(5),
        ),
        (
            "harness semantics (W3, dry run)",
            criterion_10,
            Duration::from_secs(30),
        ),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > limit => Err(format!("{detail}; took {took:?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "criterion {:>2}: PASS  {name} ({took:.2?}): {detail}",
                i + 1
            ),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {name} ({took:.2?}): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
