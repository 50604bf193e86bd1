//! CSV staging sources read by `COPY INTO` and `MERGE INTO`.
//!
//! Columns are matched to the table schema by header name. A refresh source
//! may carry an extra `op` column: `D` marks a delete of the row's key, any
//! other value (or no `op` column at all) an upsert.

use std::ops::Range;
use std::path::Path;

use crate::error::{EngineError, Result};
use crate::value::{Row, Schema, Value};

/// Rows of a refresh source split into upserts and deleted keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChangeSet {
    pub upserts: Vec<Row>,
    pub deletes: Vec<Value>,
}

struct Mapping {
    columns: Vec<usize>,
    op: Option<usize>,
}

fn mapping(path: &Path, headers: &csv::StringRecord, schema: &Schema) -> Result<Mapping> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let columns = schema
        .columns
        .iter()
        .map(|c| {
            find(&c.name).ok_or_else(|| {
                EngineError::SchemaMismatch(format!("{} lacks column {}", path.display(), c.name))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mapping {
        columns,
        op: find("op"),
    })
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> EngineError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => EngineError::io(path, io),
        other => EngineError::format(path, format!("{other:?}")),
    }
}

/// Number of data rows in a CSV source.
pub fn count_rows(path: &Path) -> Result<u64> {
    let mut rdr = open(path)?;
    let mut n = 0;
    for rec in rdr.records() {
        rec.map_err(|e| csv_err(path, e))?;
        n += 1;
    }
    Ok(n)
}

pub fn read_rows(path: &Path, schema: &Schema) -> Result<Vec<Row>> {
    let mut rdr = open(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let map = mapping(path, &headers, schema)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push(parse_row(&rec, &map, schema)?);
    }
    Ok(rows)
}

/// Reads a refresh source, optionally restricted to the half-open range of
/// data-row positions `range`.
pub fn read_changes(
    path: &Path,
    schema: &Schema,
    key_idx: usize,
    range: Option<Range<u64>>,
) -> Result<ChangeSet> {
    let mut rdr = open(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let map = mapping(path, &headers, schema)?;
    let key_col = map.columns[key_idx];
    let key_ty = schema.columns[key_idx].ty;
    let mut out = ChangeSet::default();
    for (pos, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if let Some(r) = &range {
            if !r.contains(&(pos as u64)) {
                continue;
            }
        }
        let is_delete = map
            .op
            .and_then(|i| rec.get(i))
            .is_some_and(|op| op.trim().eq_ignore_ascii_case("D"));
        if is_delete {
            out.deletes
                .push(Value::parse_as(key_ty, rec.get(key_col).unwrap_or(""))?);
        } else {
            out.upserts.push(parse_row(&rec, &map, schema)?);
        }
    }
    Ok(out)
}

fn parse_row(rec: &csv::StringRecord, map: &Mapping, schema: &Schema) -> Result<Row> {
    map.columns
        .iter()
        .zip(&schema.columns)
        .map(|(&i, c)| Value::parse_as(c.ty, rec.get(i).unwrap_or("")))
        .collect()
}
