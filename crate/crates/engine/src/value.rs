//! Typed cell values and table schemas.

use std::cmp::Ordering;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ColumnType {
    Int64,
    Decimal,
    String,
    Date,
}

impl ColumnType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "INT64" | "INT" | "BIGINT" => Some(Self::Int64),
            "DECIMAL" => Some(Self::Decimal),
            "STRING" | "VARCHAR" | "TEXT" => Some(Self::String),
            "DATE" => Some(Self::Date),
            _ => None,
        }
    }
}

/// A single cell. Decimals are fixed-point with two fractional digits,
/// stored as hundredths.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Value {
    #[serde(rename = "i")]
    Int(i64),
    #[serde(rename = "d")]
    Decimal(i64),
    #[serde(rename = "s")]
    Str(String),
    #[serde(rename = "t")]
    Date(NaiveDate),
}

pub type Row = Vec<Value>;

impl Value {
    pub fn column_type(&self) -> ColumnType {
        match self {
            Value::Int(_) => ColumnType::Int64,
            Value::Decimal(_) => ColumnType::Decimal,
            Value::Str(_) => ColumnType::String,
            Value::Date(_) => ColumnType::Date,
        }
    }

    /// Parses the textual form used by CSV sources and SQL literals.
    pub fn parse_as(ty: ColumnType, text: &str) -> Result<Value> {
        let text = text.trim();
        let bad = || EngineError::SchemaMismatch(format!("cannot parse {text:?} as {ty:?}"));
        match ty {
            ColumnType::Int64 => text.parse().map(Value::Int).map_err(|_| bad()),
            ColumnType::Decimal => parse_decimal(text).map(Value::Decimal).ok_or_else(bad),
            ColumnType::String => Ok(Value::Str(text.to_string())),
            ColumnType::Date => NaiveDate::parse_from_str(text, "%Y-%m-%d")
                .map(Value::Date)
                .map_err(|_| bad()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Decimal(c) => Some(*c as f64 / 100.0),
            _ => None,
        }
    }

    /// Compact untagged JSON used for row payloads in data files.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Int(v) => serde_json::Value::from(*v),
            other => serde_json::Value::String(other.to_string()),
        }
    }

    pub fn from_json(ty: ColumnType, json: &serde_json::Value) -> Result<Value> {
        match (ty, json) {
            (ColumnType::Int64, serde_json::Value::Number(n)) => n
                .as_i64()
                .map(Value::Int)
                .ok_or_else(|| EngineError::SchemaMismatch(format!("not an INT64: {n}"))),
            (_, serde_json::Value::String(s)) => Value::parse_as(ty, s),
            (_, other) => Err(EngineError::SchemaMismatch(format!(
                "unexpected JSON {other} for {ty:?}"
            ))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Decimal(c) => {
                let sign = if *c < 0 { "-" } else { "" };
                let abs = c.unsigned_abs();
                write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
            }
            Value::Str(s) => f.write_str(s),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

fn parse_decimal(text: &str) -> Option<i64> {
    let (neg, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (whole, frac) = match digits.split_once('.') {
        Some((w, f)) => (w, f),
        None => (digits, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if frac.len() > 2 {
        return None;
    }
    let whole: i64 = if whole.is_empty() {
        0
    } else {
        whole.parse().ok()?
    };
    let mut frac_val: i64 = if frac.is_empty() {
        0
    } else {
        frac.parse().ok()?
    };
    if frac.len() == 1 {
        frac_val *= 10;
    }
    let cents = whole.checked_mul(100)?.checked_add(frac_val)?;
    Some(if neg { -cents } else { cents })
}

/// Compares two values of possibly different numeric types.
pub fn compare(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Int(x), Value::Decimal(y)) => (x * 100).cmp(y),
        (Value::Decimal(x), Value::Int(y)) => x.cmp(&(y * 100)),
        _ => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: impl IntoIterator<Item = (impl Into<String>, ColumnType)>) -> Self {
        Self {
            columns: columns
                .into_iter()
                .map(|(name, ty)| Column {
                    name: name.into(),
                    ty,
                })
                .collect(),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn check_row(&self, row: &Row) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(EngineError::SchemaMismatch(format!(
                "row has {} values, schema has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        for (v, c) in row.iter().zip(&self.columns) {
            if v.column_type() != c.ty {
                return Err(EngineError::SchemaMismatch(format!(
                    "column {} expects {:?}, got {:?}",
                    c.name,
                    c.ty,
                    v.column_type()
                )));
            }
        }
        Ok(())
    }
}
