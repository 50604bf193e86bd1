use std::io::Write;

use lsth_engine::{Engine, EngineError, Value};

fn csv(dir: &std::path::Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::File::create(&path)
        .unwrap()
        .write_all(body.as_bytes())
        .unwrap();
    path.display().to_string()
}

fn setup(layout: &str, mode: &str) -> (tempfile::TempDir, Engine) {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(dir.path().join("store")).unwrap();
    let mut fact = String::from("key,dim_fk,amount,event_date\n");
    for k in 1..=100 {
        fact.push_str(&format!(
            "{k},{},{}.50,2024-01-{:02}\n",
            k % 4,
            k,
            1 + k % 28
        ));
    }
    let f = csv(dir.path(), "fact.csv", &fact);
    let d = csv(
        dir.path(),
        "dim.csv",
        "d_key,d_name\n0,zero\n1,one\n2,two\n3,three\n",
    );
    e.execute(&format!(
        "CREATE TABLE fact (key INT64, dim_fk INT64, amount DECIMAL, event_date DATE) \
         USING {layout} MODE {mode} KEY key TARGET 40"
    ))
    .unwrap();
    e.execute(
        "CREATE TABLE dim (d_key INT64, d_name STRING) USING delta MODE cow KEY d_key TARGET 10",
    )
    .unwrap();
    assert_eq!(
        e.execute(&format!("COPY INTO fact FROM '{f}'"))
            .unwrap()
            .row_count,
        100
    );
    e.execute(&format!("COPY INTO dim FROM '{d}'")).unwrap();
    (dir, e)
}

#[test]
fn count_on_empty_table_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(dir.path()).unwrap();
    e.execute("CREATE TABLE t (k INT64) USING hudi MODE mor KEY k TARGET 5")
        .unwrap();
    let out = e.execute("SELECT count(*) FROM t").unwrap();
    assert_eq!(out.row_count, 1);
    assert_eq!(out.scalar(), Some(0.0));
}

#[test]
fn select_from_missing_table_fails() {
    let dir = tempfile::tempdir().unwrap();
    let e = Engine::open(dir.path()).unwrap();
    assert!(matches!(
        e.execute("SELECT * FROM missing").unwrap_err(),
        EngineError::UnknownTable(_)
    ));
    assert!(matches!(
        e.execute("SELEKT 1").unwrap_err(),
        EngineError::Parse(_)
    ));
}

#[test]
fn queries_agree_across_layouts() {
    let queries = [
        "SELECT count(*) FROM fact",
        "SELECT * FROM fact WHERE key = 42",
        "SELECT key, amount FROM fact WHERE key BETWEEN 10 AND 20 ORDER BY key",
        "SELECT d_name, count(*), sum(amount) FROM fact JOIN dim ON fact.dim_fk = dim.d_key GROUP BY d_name ORDER BY d_name",
        "SELECT dim_fk, max(amount), min(event_date) FROM fact GROUP BY dim_fk ORDER BY dim_fk",
        "SELECT key, amount FROM fact ORDER BY amount DESC LIMIT 3",
        "SELECT count(distinct dim_fk) FROM fact WHERE amount >= 50",
        "SELECT sum(amount) FROM fact WHERE event_date < DATE '2024-01-10'",
    ];
    let mut reference: Option<Vec<Vec<Vec<Option<Value>>>>> = None;
    for layout in ["delta", "iceberg", "hudi"] {
        for mode in ["cow", "mor"] {
            let (dir, e) = setup(layout, mode);
            let r = csv(dir.path(), "r.csv", "op,key,dim_fk,amount,event_date\nU,5,1,1.00,2024-02-01\nD,6,0,0,2024-01-01\nI,500,2,9.99,2024-03-03\n");
            e.execute(&format!("MERGE INTO fact USING '{r}'")).unwrap();
            e.execute("DELETE FROM fact WHERE key IN (7, 8)").unwrap();
            let results: Vec<_> = queries.iter().map(|q| e.execute(q).unwrap().rows).collect();
            match &reference {
                None => reference = Some(results),
                Some(r) => assert_eq!(r, &results, "{layout}/{mode}"),
            }
        }
    }
    let r = reference.unwrap();
    assert_eq!(r[0], vec![vec![Some(Value::Int(98))]]);
    assert!(r[1].len() == 1);
    assert_eq!(r[2].len(), 11);
    assert_eq!(r[3].len(), 4);
    assert_eq!(r[5][0][0], Some(Value::Int(100)));
}

#[test]
fn time_travel_and_maintenance_statements() {
    let (dir, e) = setup("iceberg", "mor");
    let before = e.execute("SELECT * FROM fact ORDER BY key").unwrap().rows;
    let r = csv(
        dir.path(),
        "r.csv",
        "op,key,dim_fk,amount,event_date\nD,1,0,0,2024-01-01\n",
    );
    let out = e.execute(&format!("MERGE INTO fact USING '{r}'")).unwrap();
    assert_eq!(out.version, Some(2));
    let asof = e
        .execute("SELECT * FROM fact ORDER BY key AS OF VERSION 1")
        .unwrap()
        .rows;
    assert_eq!(asof, before);
    assert_eq!(
        e.execute("SELECT count(*) FROM fact").unwrap().scalar(),
        Some(99.0)
    );
    e.execute("OPTIMIZE fact").unwrap();
    e.execute("VACUUM fact RETAIN 0 VERSIONS").unwrap();
    assert!(e
        .execute("SELECT count(*) FROM fact AS OF VERSION 1")
        .is_err());
    assert_eq!(
        e.execute("SELECT count(*) FROM fact").unwrap().scalar(),
        Some(99.0)
    );
}

#[test]
fn ranged_merge_applies_only_its_rows() {
    let (dir, e) = setup("delta", "cow");
    let r = csv(
        dir.path(),
        "r.csv",
        "op,key,dim_fk,amount,event_date\nD,1,0,0,2024-01-01\nD,2,0,0,2024-01-01\nD,3,0,0,2024-01-01\n",
    );
    e.execute(&format!("MERGE INTO fact USING '{r}' ROWS 1 TO 3"))
        .unwrap();
    assert_eq!(
        e.execute("SELECT count(*) FROM fact WHERE key <= 3")
            .unwrap()
            .scalar(),
        Some(1.0)
    );
}

#[test]
fn statement_counters_sum_to_engine_counters() {
    let (_dir, e) = setup("hudi", "mor");
    let start = e.counters();
    let mut sum = lsth_engine::StorageCounters::default();
    for q in [
        "SELECT count(*) FROM fact",
        "DELETE FROM fact WHERE key IN (3)",
        "OPTIMIZE fact",
    ] {
        sum += e.execute(q).unwrap().counters;
    }
    assert_eq!(sum, e.counters() - start);
}
