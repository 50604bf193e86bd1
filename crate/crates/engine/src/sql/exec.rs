//! Statement execution over an [`Engine`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::parser::{
    self, AggFunc, ColRef, CondOp, Condition, Literal, Query, SelectItem, Statement,
};
use crate::engine::Engine;
use crate::error::{EngineError, Result};
use crate::predicate::{CmpOp, Comparison, Predicate};
use crate::storage::{OpenBreakdown, StorageCounters};
use crate::table::TableDescriptor;
use crate::value::{ColumnType, Row, Schema, Value};

/// Result of one statement. Cells are `None` for aggregates over no rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<Value>>>,
    /// Rows returned by a query, or rows written by a write statement.
    pub row_count: u64,
    /// Table version read or produced.
    pub version: Option<u64>,
    pub counters: StorageCounters,
    pub opens: OpenBreakdown,
}

impl QueryOutput {
    /// The single numeric cell of a one-row, one-column result.
    pub fn scalar(&self) -> Option<f64> {
        match self.rows.as_slice() {
            [row] if row.len() == 1 => row[0].as_ref().and_then(Value::as_f64),
            _ => None,
        }
    }
}

impl Engine {
    /// Parses and executes one `minisql` statement.
    pub fn execute(&self, sql: &str) -> Result<QueryOutput> {
        self.execute_statement(&parser::parse(sql)?)
    }

    pub fn execute_statement(&self, stmt: &Statement) -> Result<QueryOutput> {
        match stmt {
            Statement::CreateTable {
                name,
                columns,
                layout,
                mode,
                key,
                target,
                checkpoint,
            } => {
                let mut desc = TableDescriptor::new(
                    name.clone(),
                    Schema::new(columns.iter().cloned()),
                    *layout,
                    *mode,
                    key.clone(),
                    *target,
                );
                if let Some(c) = checkpoint {
                    desc.checkpoint_interval = *c;
                }
                let out = self.create_table(desc)?;
                Ok(write_output(0, out.value.version, out.counters, out.opens))
            }
            Statement::CopyInto { table, path } => {
                let out = self.copy_into(table, Path::new(path))?;
                let rows = added_rows(self, table, out.value.version);
                Ok(write_output(
                    rows,
                    out.value.version,
                    out.counters,
                    out.opens,
                ))
            }
            Statement::MergeInto { table, path, rows } => {
                let range = rows.map(|(a, b)| a..b);
                let out = self.merge_from_source(table, Path::new(path), range)?;
                let rows = added_rows(self, table, out.value.version);
                Ok(write_output(
                    rows,
                    out.value.version,
                    out.counters,
                    out.opens,
                ))
            }
            Statement::DeleteFrom {
                table,
                column,
                keys,
            } => {
                // Key types are only known from the snapshot, so the delete is
                // planned inside the merge against the current descriptor.
                let meta = self.read_metadata(table, None)?;
                let desc = &meta.value.descriptor;
                if !column.eq_ignore_ascii_case(&desc.key_column) {
                    return Err(EngineError::Exec(format!(
                        "DELETE must filter on key column {}",
                        desc.key_column
                    )));
                }
                let ty = desc.schema.columns[desc.key_index()].ty;
                let keys = keys
                    .iter()
                    .map(|l| literal_value(ty, l))
                    .collect::<Result<Vec<_>>>()?;
                let n = keys.len() as u64;
                let out = self.merge(table, Vec::new(), keys)?;
                Ok(write_output(
                    n,
                    out.value.version,
                    out.counters + meta.counters,
                    out.opens + meta.opens,
                ))
            }
            Statement::Optimize { table } => {
                let out = self.optimize(table)?;
                Ok(write_output(0, out.value.version, out.counters, out.opens))
            }
            Statement::Vacuum { table, retain } => {
                let out = self.vacuum(table, *retain)?;
                Ok(write_output(0, out.value.version, out.counters, out.opens))
            }
            Statement::Select(q) => self.select(q),
        }
    }

    fn select(&self, q: &Query) -> Result<QueryOutput> {
        let mut counters = StorageCounters::default();
        let mut opens = OpenBreakdown::default();
        let mut pushed = vec![false; q.filter.len()];
        let right_name = q.join.as_ref().map(|j| j.table.as_str());

        let mut left_schema = None;
        let left = self.scan_with(&q.from, q.asof, |desc| {
            let p = bind_filter(
                &q.filter,
                &desc.schema,
                &q.from,
                right_name,
                &mut pushed,
                None,
            )?;
            left_schema = Some(desc.schema.clone());
            Ok(p)
        })?;
        counters += left.counters;
        opens += left.opens;
        let left_schema = left_schema.expect("scan binds the schema");
        let version = left.value.version;

        let (columns, rows) = match &q.join {
            None => (qualified(&q.from, &left_schema), left.value.rows),
            Some(join) => {
                let mut right_schema = None;
                let right = self.scan_with(&join.table, None, |desc| {
                    let p = bind_filter(
                        &q.filter,
                        &desc.schema,
                        &join.table,
                        None,
                        &mut pushed,
                        Some(&left_schema),
                    )?;
                    right_schema = Some(desc.schema.clone());
                    Ok(p)
                })?;
                counters += right.counters;
                opens += right.opens;
                let right_schema = right_schema.expect("scan binds the schema");
                let mut columns = qualified(&q.from, &left_schema);
                columns.extend(qualified(&join.table, &right_schema));
                let lk = resolve(&columns, &join.left)?;
                let rk = resolve(&columns, &join.right)?;
                let split = left_schema.len();
                let (lk, rk) = match (lk < split, rk < split) {
                    (true, false) => (lk, rk - split),
                    (false, true) => (rk, lk - split),
                    _ => {
                        return Err(EngineError::Exec(
                            "join condition must compare the two tables".into(),
                        ))
                    }
                };
                let mut index: HashMap<Value, Vec<Row>> = HashMap::new();
                for row in right.value.rows {
                    index.entry(row[rk].clone()).or_default().push(row);
                }
                let mut rows = Vec::new();
                for l in left.value.rows {
                    if let Some(matches) = index.get(&l[lk]) {
                        for r in matches {
                            let mut joined = l.clone();
                            joined.extend(r.iter().cloned());
                            rows.push(joined);
                        }
                    }
                }
                (columns, rows)
            }
        };
        if let Some(i) = pushed.iter().position(|p| !p) {
            return Err(EngineError::Exec(format!(
                "unknown column {}",
                q.filter[i].column
            )));
        }

        let (labels, mut out_rows) = if q.group_by.is_empty()
            && !q.items.iter().any(|i| matches!(i, SelectItem::Agg { .. }))
        {
            project(&q.items, &columns, rows)?
        } else {
            aggregate(q, &columns, rows)?
        };

        if let Some((name, desc)) = &q.order_by {
            let pos = labels
                .iter()
                .position(|l| l.eq_ignore_ascii_case(name))
                .ok_or_else(|| {
                    EngineError::Exec(format!("ORDER BY {name} is not a selected column"))
                })?;
            out_rows.sort_by(|a, b| {
                let o = a[pos].cmp(&b[pos]);
                if *desc {
                    o.reverse()
                } else {
                    o
                }
            });
        }
        if let Some(n) = q.limit {
            out_rows.truncate(n as usize);
        }
        Ok(QueryOutput {
            columns: labels,
            row_count: out_rows.len() as u64,
            rows: out_rows,
            version: Some(version),
            counters,
            opens,
        })
    }
}

fn write_output(
    rows: u64,
    version: u64,
    counters: StorageCounters,
    opens: OpenBreakdown,
) -> QueryOutput {
    QueryOutput {
        row_count: rows,
        version: Some(version),
        counters,
        opens,
        ..QueryOutput::default()
    }
}

/// Rows written by the commit at `version`, read back from the log without
/// charging the statement.
fn added_rows(engine: &Engine, table: &str, version: u64) -> u64 {
    use crate::log::Action;
    engine
        .read_commit(table, version)
        .ok()
        .flatten()
        .map(|c| {
            c.actions
                .iter()
                .map(|a| match a {
                    Action::AddFile(f) => f.row_count,
                    Action::AddDelta(d) => d.upsert_count + d.delete_count,
                    _ => 0,
                })
                .sum()
        })
        .unwrap_or(0)
}

struct Col {
    table: String,
    name: String,
    ty: ColumnType,
}

fn qualified(table: &str, schema: &Schema) -> Vec<Col> {
    schema
        .columns
        .iter()
        .map(|c| Col {
            table: table.to_string(),
            name: c.name.clone(),
            ty: c.ty,
        })
        .collect()
}

fn resolve(columns: &[Col], c: &ColRef) -> Result<usize> {
    columns
        .iter()
        .position(|col| {
            col.name.eq_ignore_ascii_case(&c.column)
                && c.table
                    .as_ref()
                    .is_none_or(|t| col.table.eq_ignore_ascii_case(t))
        })
        .ok_or_else(|| EngineError::Exec(format!("unknown column {c}")))
}

/// Binds the filter conditions that belong to `table` into a scan
/// predicate and marks them as pushed. Unqualified columns go to the first
/// table whose schema has them; `earlier` is the schema that had first pick.
fn bind_filter(
    filter: &[Condition],
    schema: &Schema,
    table: &str,
    other: Option<&str>,
    pushed: &mut [bool],
    earlier: Option<&Schema>,
) -> Result<Predicate> {
    let mut terms = Vec::new();
    for (i, cond) in filter.iter().enumerate() {
        if pushed[i] {
            continue;
        }
        let idx = match &cond.column.table {
            Some(t) if t.eq_ignore_ascii_case(table) => schema.index_of(&cond.column.column),
            Some(t) if other.is_some_and(|o| o.eq_ignore_ascii_case(t)) => continue,
            Some(_) => None,
            None if earlier.is_some_and(|e| e.index_of(&cond.column.column).is_some()) => continue,
            None => schema.index_of(&cond.column.column),
        };
        let Some(idx) = idx else {
            if other.is_some() && cond.column.table.is_none() {
                continue;
            }
            return Err(EngineError::Exec(format!("unknown column {}", cond.column)));
        };
        let ty = schema.columns[idx].ty;
        let op = match &cond.op {
            CondOp::Eq(l) => CmpOp::Eq(literal_value(ty, l)?),
            CondOp::Lt(l) => CmpOp::Lt(literal_value(ty, l)?),
            CondOp::Le(l) => CmpOp::Le(literal_value(ty, l)?),
            CondOp::Gt(l) => CmpOp::Gt(literal_value(ty, l)?),
            CondOp::Ge(l) => CmpOp::Ge(literal_value(ty, l)?),
            CondOp::Between(a, b) => CmpOp::Between(literal_value(ty, a)?, literal_value(ty, b)?),
        };
        terms.push(Comparison::new(idx, op));
        pushed[i] = true;
    }
    Ok(Predicate::new(terms))
}

fn literal_value(ty: ColumnType, lit: &Literal) -> Result<Value> {
    match (ty, lit) {
        (ColumnType::Int64, Literal::Number(n)) if n.contains('.') => {
            Value::parse_as(ColumnType::Decimal, n)
        }
        _ => Value::parse_as(ty, lit.text()),
    }
}

type Labels = Vec<String>;
type OutRows = Vec<Vec<Option<Value>>>;

fn project(items: &[SelectItem], columns: &[Col], rows: Vec<Row>) -> Result<(Labels, OutRows)> {
    let mut picks = Vec::new();
    let mut labels = Vec::new();
    for item in items {
        match item {
            SelectItem::Star => {
                for (i, c) in columns.iter().enumerate() {
                    picks.push(i);
                    labels.push(c.name.clone());
                }
            }
            SelectItem::Column(c) => {
                picks.push(resolve(columns, c)?);
                labels.push(c.column.clone());
            }
            SelectItem::Agg { .. } => unreachable!("handled by aggregate"),
        }
    }
    let out = rows
        .into_iter()
        .map(|row| picks.iter().map(|&i| Some(row[i].clone())).collect())
        .collect();
    Ok((labels, out))
}

enum Acc {
    Count(u64),
    Distinct(BTreeSet<Value>),
    Sum(i64, ColumnType),
    Min(Option<Value>),
    Max(Option<Value>),
}

impl Acc {
    fn add(&mut self, v: Option<&Value>) {
        match (self, v) {
            (Acc::Count(n), _) => *n += 1,
            (Acc::Distinct(s), Some(v)) => {
                s.insert(v.clone());
            }
            (Acc::Sum(total, _), Some(Value::Int(x) | Value::Decimal(x))) => *total += x,
            (Acc::Min(m), Some(v)) => {
                if m.as_ref().is_none_or(|cur| v < cur) {
                    *m = Some(v.clone());
                }
            }
            (Acc::Max(m), Some(v)) if m.as_ref().is_none_or(|cur| v > cur) => {
                *m = Some(v.clone());
            }
            _ => {}
        }
    }

    fn finish(&self) -> Option<Value> {
        match self {
            Acc::Count(n) => Some(Value::Int(*n as i64)),
            Acc::Distinct(s) => Some(Value::Int(s.len() as i64)),
            Acc::Sum(t, ColumnType::Decimal) => Some(Value::Decimal(*t)),
            Acc::Sum(t, _) => Some(Value::Int(*t)),
            Acc::Min(m) | Acc::Max(m) => m.clone(),
        }
    }
}

enum Output {
    Group(usize),
    Agg(AggFunc, Option<usize>),
}

fn aggregate(q: &Query, columns: &[Col], rows: Vec<Row>) -> Result<(Labels, OutRows)> {
    let keys = q
        .group_by
        .iter()
        .map(|c| resolve(columns, c))
        .collect::<Result<Vec<_>>>()?;
    let mut outputs = Vec::new();
    let mut labels = Vec::new();
    for item in &q.items {
        labels.push(item.label());
        match item {
            SelectItem::Star => {
                return Err(EngineError::Exec(
                    "* cannot be combined with aggregates".into(),
                ))
            }
            SelectItem::Column(c) => {
                let i = resolve(columns, c)?;
                let g = keys
                    .iter()
                    .position(|&k| k == i)
                    .ok_or_else(|| EngineError::Exec(format!("{c} must appear in GROUP BY")))?;
                outputs.push(Output::Group(g));
            }
            SelectItem::Agg { func, arg } => {
                let i = arg.as_ref().map(|c| resolve(columns, c)).transpose()?;
                if *func == AggFunc::Sum {
                    let ty = i.map(|i| columns[i].ty);
                    if !matches!(ty, Some(ColumnType::Int64 | ColumnType::Decimal)) {
                        return Err(EngineError::Exec("sum() needs a numeric column".into()));
                    }
                }
                if i.is_none() && *func != AggFunc::Count {
                    return Err(EngineError::Exec(format!(
                        "{} needs a column",
                        item.label()
                    )));
                }
                outputs.push(Output::Agg(*func, i));
            }
        }
    }
    let new_accs = || -> Vec<Acc> {
        outputs
            .iter()
            .filter_map(|o| match o {
                Output::Agg(f, i) => Some(match f {
                    AggFunc::Count => Acc::Count(0),
                    AggFunc::CountDistinct => Acc::Distinct(BTreeSet::new()),
                    AggFunc::Sum => Acc::Sum(0, columns[i.expect("checked")].ty),
                    AggFunc::Min => Acc::Min(None),
                    AggFunc::Max => Acc::Max(None),
                }),
                Output::Group(_) => None,
            })
            .collect()
    };
    let agg_cols: Vec<Option<usize>> = outputs
        .iter()
        .filter_map(|o| match o {
            Output::Agg(_, i) => Some(*i),
            Output::Group(_) => None,
        })
        .collect();
    let mut groups: BTreeMap<Vec<Value>, Vec<Acc>> = BTreeMap::new();
    if keys.is_empty() {
        groups.insert(Vec::new(), new_accs());
    }
    for row in rows {
        let key: Vec<Value> = keys.iter().map(|&k| row[k].clone()).collect();
        let accs = groups.entry(key).or_insert_with(new_accs);
        for (acc, col) in accs.iter_mut().zip(&agg_cols) {
            acc.add(col.map(|c| &row[c]));
        }
    }
    let out = groups
        .into_iter()
        .map(|(key, accs)| {
            let mut finished = accs.iter().map(Acc::finish);
            outputs
                .iter()
                .map(|o| match o {
                    Output::Group(g) => Some(key[*g].clone()),
                    Output::Agg(..) => finished.next().expect("one accumulator per aggregate"),
                })
                .collect()
        })
        .collect();
    Ok((labels, out))
}
