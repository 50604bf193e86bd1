use std::cmp::Ordering;

use crate::table::ColumnStats;
use crate::value::{compare, Row, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum CmpOp {
    Eq(Value),
    Lt(Value),
    Le(Value),
    Gt(Value),
    Ge(Value),
    Between(Value, Value),
}

/// `column <op> literal`, with the column given by schema position.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub column: usize,
    pub op: CmpOp,
}

impl Comparison {
    pub fn new(column: usize, op: CmpOp) -> Self {
        Self { column, op }
    }

    pub fn matches(&self, v: &Value) -> bool {
        use Ordering::*;
        match &self.op {
            CmpOp::Eq(x) => compare(v, x) == Equal,
            CmpOp::Lt(x) => compare(v, x) == Less,
            CmpOp::Le(x) => compare(v, x) != Greater,
            CmpOp::Gt(x) => compare(v, x) == Greater,
            CmpOp::Ge(x) => compare(v, x) != Less,
            CmpOp::Between(lo, hi) => compare(v, lo) != Less && compare(v, hi) != Greater,
        }
    }

    /// Whether some value in `[lo, hi]` could satisfy the comparison.
    pub fn may_match_range(&self, lo: &Value, hi: &Value) -> bool {
        use Ordering::*;
        match &self.op {
            CmpOp::Eq(x) => compare(lo, x) != Greater && compare(hi, x) != Less,
            CmpOp::Lt(x) => compare(lo, x) == Less,
            CmpOp::Le(x) => compare(lo, x) != Greater,
            CmpOp::Gt(x) => compare(hi, x) == Greater,
            CmpOp::Ge(x) => compare(hi, x) != Less,
            CmpOp::Between(a, b) => compare(hi, a) != Less && compare(lo, b) != Greater,
        }
    }
}

/// A conjunction of comparisons. The empty predicate matches everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predicate {
    pub terms: Vec<Comparison>,
}

impl Predicate {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<Comparison>) -> Self {
        Self { terms }
    }

    pub fn matches(&self, row: &Row) -> bool {
        self.terms.iter().all(|t| t.matches(&row[t.column]))
    }

    /// False only when the statistics prove no row can match.
    pub fn may_match(&self, stats: &[ColumnStats]) -> bool {
        self.terms.iter().all(|t| match stats.get(t.column) {
            Some(Some((lo, hi))) => t.may_match_range(lo, hi),
            Some(None) => false,
            None => true,
        })
    }
}
