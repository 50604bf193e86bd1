//! Table descriptors and the physical data/delta file format.
//!
//! Data files are line-oriented: a JSON header carrying the row count and
//! per-column min/max statistics, followed by one JSON array per row. Delta
//! files use the same shape with a header naming the base file and the keys it
//! deletes; their body lines are upserted rows.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::storage::{FileClass, Io};
use crate::value::{Row, Schema, Value};

/// Delta-style checkpoint cadence when none is configured.
pub const DEFAULT_CHECKPOINT_INTERVAL: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Layout {
    DeltaStyle,
    IcebergStyle,
    HudiStyle,
}

impl Layout {
    pub const ALL: [Layout; 3] = [Layout::DeltaStyle, Layout::IcebergStyle, Layout::HudiStyle];

    /// The keyword used in `CREATE TABLE ... USING <kw>`.
    pub fn keyword(self) -> &'static str {
        match self {
            Layout::DeltaStyle => "delta",
            Layout::IcebergStyle => "iceberg",
            Layout::HudiStyle => "hudi",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.keyword().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WriteMode {
    Cow,
    Mor,
}

impl WriteMode {
    pub fn keyword(self) -> &'static str {
        match self {
            WriteMode::Cow => "cow",
            WriteMode::Mor => "mor",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cow" => Some(WriteMode::Cow),
            "mor" => Some(WriteMode::Mor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDescriptor {
    pub name: String,
    pub schema: Schema,
    pub layout: Layout,
    pub write_mode: WriteMode,
    pub key_column: String,
    pub target_file_rows: u64,
    pub checkpoint_interval: u64,
}

impl TableDescriptor {
    pub fn new(
        name: impl Into<String>,
        schema: Schema,
        layout: Layout,
        write_mode: WriteMode,
        key_column: impl Into<String>,
        target_file_rows: u64,
    ) -> Self {
        Self {
            name: name.into(),
            schema,
            layout,
            write_mode,
            key_column: key_column.into(),
            target_file_rows,
            checkpoint_interval: DEFAULT_CHECKPOINT_INTERVAL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema.is_empty() {
            return Err(EngineError::SchemaMismatch("schema has no columns".into()));
        }
        if self.schema.index_of(&self.key_column).is_none() {
            return Err(EngineError::SchemaMismatch(format!(
                "key column {} not in schema",
                self.key_column
            )));
        }
        if self.target_file_rows == 0 {
            return Err(EngineError::SchemaMismatch(
                "target_file_rows must be >= 1".into(),
            ));
        }
        if self.checkpoint_interval == 0 {
            return Err(EngineError::SchemaMismatch(
                "checkpoint_interval must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn key_index(&self) -> usize {
        self.schema
            .index_of(&self.key_column)
            .expect("validated descriptor has its key column")
    }
}

/// Min/max of one column; `None` for an empty file.
pub type ColumnStats = Option<(Value, Value)>;

pub(crate) fn compute_stats(schema: &Schema, rows: &[Row]) -> Vec<ColumnStats> {
    (0..schema.len())
        .map(|c| {
            let mut it = rows.iter().map(|r| &r[c]);
            let first = it.next()?;
            let (mut lo, mut hi) = (first, first);
            for v in it {
                if v < lo {
                    lo = v;
                }
                if v > hi {
                    hi = v;
                }
            }
            Some((lo.clone(), hi.clone()))
        })
        .collect()
}

/// Metadata describing one immutable data file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFile {
    pub file_id: String,
    pub row_count: u64,
    pub byte_size: u64,
    pub stats: Vec<ColumnStats>,
    /// Version of the commit that added the file. Filled in from the log.
    #[serde(default)]
    pub created_by_version: u64,
}

/// Metadata describing one immutable delta file attached to a base file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaFile {
    pub file_id: String,
    pub base_file_id: String,
    pub byte_size: u64,
    pub upsert_count: u64,
    pub delete_count: u64,
    /// Statistics over the upserted rows only.
    pub stats: Vec<ColumnStats>,
    #[serde(default)]
    pub created_by_version: u64,
}

/// Decoded body of a delta file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaContents {
    pub deleted_keys: BTreeSet<Value>,
    pub upserted_rows: Vec<Row>,
}

#[derive(Serialize, Deserialize)]
struct DataHeader {
    file_id: String,
    row_count: u64,
    stats: Vec<ColumnStats>,
}

#[derive(Serialize, Deserialize)]
struct DeltaHeader {
    file_id: String,
    base_file_id: String,
    deleted_keys: Vec<Value>,
    upsert_count: u64,
}

pub(crate) fn data_dir(root: &Path, table: &str) -> PathBuf {
    root.join(table).join("data")
}

pub(crate) fn meta_dir(root: &Path, table: &str) -> PathBuf {
    root.join(table).join("meta")
}

pub(crate) fn new_file_id(prefix: &str, version_hint: u64) -> String {
    format!(
        "{prefix}{version_hint:08}-{}",
        uuid::Uuid::new_v4().simple()
    )
}

fn encode_rows(out: &mut String, rows: &[Row]) {
    for row in rows {
        let arr: Vec<serde_json::Value> = row.iter().map(Value::to_json).collect();
        out.push_str(&serde_json::Value::Array(arr).to_string());
        out.push('\n');
    }
}

fn decode_rows<'a>(
    path: &Path,
    schema: &Schema,
    lines: impl Iterator<Item = &'a str>,
) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let json: serde_json::Value =
            serde_json::from_str(line).map_err(|e| EngineError::format(path, e))?;
        let arr = json
            .as_array()
            .filter(|a| a.len() == schema.len())
            .ok_or_else(|| EngineError::format(path, "row arity mismatch"))?;
        let row = arr
            .iter()
            .zip(&schema.columns)
            .map(|(j, c)| Value::from_json(c.ty, j))
            .collect::<Result<Row>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub(crate) fn write_data_file(
    io: &mut Io,
    root: &Path,
    table: &TableDescriptor,
    file_id: String,
    rows: &[Row],
) -> Result<DataFile> {
    let stats = compute_stats(&table.schema, rows);
    let header = DataHeader {
        file_id: file_id.clone(),
        row_count: rows.len() as u64,
        stats: stats.clone(),
    };
    let mut body = serde_json::to_string(&header).expect("header serializes");
    body.push('\n');
    encode_rows(&mut body, rows);
    let path = data_dir(root, &table.name).join(format!("{file_id}.data"));
    io.write_new(&path, body.as_bytes())?;
    Ok(DataFile {
        file_id,
        row_count: rows.len() as u64,
        byte_size: body.len() as u64,
        stats,
        created_by_version: 0,
    })
}

pub(crate) fn read_data_file(
    io: &mut Io,
    root: &Path,
    table: &TableDescriptor,
    file_id: &str,
) -> Result<Vec<Row>> {
    let path = data_dir(root, &table.name).join(format!("{file_id}.data"));
    let bytes = io.read(&path, FileClass::Data)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| EngineError::format(&path, e))?;
    let mut lines = text.lines();
    let header: DataHeader = serde_json::from_str(lines.next().unwrap_or_default())
        .map_err(|e| EngineError::format(&path, e))?;
    let rows = decode_rows(&path, &table.schema, lines)?;
    if rows.len() as u64 != header.row_count {
        return Err(EngineError::format(
            &path,
            "row count disagrees with header",
        ));
    }
    Ok(rows)
}

pub(crate) fn write_delta_file(
    io: &mut Io,
    root: &Path,
    table: &TableDescriptor,
    file_id: String,
    base_file_id: &str,
    contents: &DeltaContents,
) -> Result<DeltaFile> {
    let header = DeltaHeader {
        file_id: file_id.clone(),
        base_file_id: base_file_id.to_string(),
        deleted_keys: contents.deleted_keys.iter().cloned().collect(),
        upsert_count: contents.upserted_rows.len() as u64,
    };
    let mut body = serde_json::to_string(&header).expect("header serializes");
    body.push('\n');
    encode_rows(&mut body, &contents.upserted_rows);
    let path = data_dir(root, &table.name).join(format!("{file_id}.delta"));
    io.write_new(&path, body.as_bytes())?;
    Ok(DeltaFile {
        file_id,
        base_file_id: base_file_id.to_string(),
        byte_size: body.len() as u64,
        upsert_count: contents.upserted_rows.len() as u64,
        delete_count: contents.deleted_keys.len() as u64,
        stats: compute_stats(&table.schema, &contents.upserted_rows),
        created_by_version: 0,
    })
}

pub(crate) fn read_delta_file(
    io: &mut Io,
    root: &Path,
    table: &TableDescriptor,
    file_id: &str,
) -> Result<DeltaContents> {
    let path = data_dir(root, &table.name).join(format!("{file_id}.delta"));
    let bytes = io.read(&path, FileClass::Delta)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| EngineError::format(&path, e))?;
    let mut lines = text.lines();
    let header: DeltaHeader = serde_json::from_str(lines.next().unwrap_or_default())
        .map_err(|e| EngineError::format(&path, e))?;
    let upserted_rows = decode_rows(&path, &table.schema, lines)?;
    Ok(DeltaContents {
        deleted_keys: header.deleted_keys.into_iter().collect(),
        upserted_rows,
    })
}
