#![allow(dead_code)]

use std::collections::BTreeMap;

use lsth_engine::{
    ColumnType, Engine, Layout, Predicate, Row, Schema, TableDescriptor, Value, WriteMode,
};

pub const MODES: [WriteMode; 2] = [WriteMode::Cow, WriteMode::Mor];

pub fn schema() -> Schema {
    Schema::new([
        ("k", ColumnType::Int64),
        ("amount", ColumnType::Decimal),
        ("tag", ColumnType::String),
    ])
}

pub fn desc(name: &str, layout: Layout, mode: WriteMode, target: u64) -> TableDescriptor {
    TableDescriptor::new(name, schema(), layout, mode, "k", target)
}

pub fn row(k: i64, cents: i64) -> Row {
    vec![
        Value::Int(k),
        Value::Decimal(cents),
        Value::Str(format!("t{}", k % 7)),
    ]
}

pub fn rows(keys: impl IntoIterator<Item = i64>) -> Vec<Row> {
    keys.into_iter().map(|k| row(k, k * 100)).collect()
}

pub fn sorted(mut rows: Vec<Row>) -> Vec<Row> {
    rows.sort();
    rows
}

pub fn scan_all(engine: &Engine, table: &str, asof: Option<u64>) -> Vec<Row> {
    sorted(
        engine
            .scan(table, &Predicate::all(), asof)
            .unwrap()
            .value
            .rows,
    )
}

/// In-memory model of a keyed table: the result every scan must equal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Model(pub BTreeMap<i64, Row>);

impl Model {
    pub fn append(&mut self, rows: &[Row]) {
        for r in rows {
            self.0.insert(key(r), r.clone());
        }
    }

    pub fn merge(&mut self, upserts: &[Row], deletes: &[i64]) {
        for k in deletes {
            self.0.remove(k);
        }
        self.append(upserts);
    }

    pub fn rows(&self) -> Vec<Row> {
        self.0.values().cloned().collect()
    }
}

pub fn key(r: &Row) -> i64 {
    match r[0] {
        Value::Int(k) => k,
        _ => panic!("key is an integer"),
    }
}
