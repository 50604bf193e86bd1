//! Lexer and recursive-descent parser for the `minisql` dialect.

use crate::error::{EngineError, Result};
use crate::table::{Layout, WriteMode};
use crate::value::ColumnType;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(String),
    Str(String),
    Sym(&'static str),
}

fn lex(sql: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i + 1 < chars.len() && !(chars[i] == '*' && chars[i + 1] == '/') {
                i += 1;
            }
            i += 2;
        } else if c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(EngineError::Parse("unterminated string literal".into())),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(ch) => {
                        s.push(*ch);
                        i += 1;
                    }
                }
            }
            out.push(Token::Str(s));
        } else if c.is_ascii_digit()
            || (c == '-'
                && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())
                && expects_operand(&out))
        {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(Token::Number(chars[start..i].iter().collect()));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let sym = match two.as_str() {
                "<=" => Some("<="),
                ">=" => Some(">="),
                "<>" => Some("<>"),
                "!=" => Some("<>"),
                _ => None,
            };
            if let Some(s) = sym {
                out.push(Token::Sym(s));
                i += 2;
                continue;
            }
            let s = match c {
                '(' => "(",
                ')' => ")",
                ',' => ",",
                '*' => "*",
                '.' => ".",
                '=' => "=",
                '<' => "<",
                '>' => ">",
                ';' => ";",
                other => {
                    return Err(EngineError::Parse(format!(
                        "unexpected character {other:?}"
                    )))
                }
            };
            out.push(Token::Sym(s));
            i += 1;
        }
    }
    Ok(out)
}

fn expects_operand(prev: &[Token]) -> bool {
    matches!(
        prev.last(),
        None | Some(Token::Sym("=" | "<" | ">" | "<=" | ">=" | "(" | ","))
    ) || matches!(prev.last(), Some(Token::Ident(k)) if k.eq_ignore_ascii_case("and") || k.eq_ignore_ascii_case("between"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(String),
    Str(String),
}

impl Literal {
    pub fn text(&self) -> &str {
        match self {
            Literal::Number(s) | Literal::Str(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColRef {
    pub table: Option<String>,
    pub column: String,
}

impl std::fmt::Display for ColRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Count,
    CountDistinct,
    Sum,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Star,
    Column(ColRef),
    /// `arg` is `None` only for `count(*)`.
    Agg {
        func: AggFunc,
        arg: Option<ColRef>,
    },
}

impl SelectItem {
    pub fn label(&self) -> String {
        match self {
            SelectItem::Star => "*".into(),
            SelectItem::Column(c) => c.column.clone(),
            SelectItem::Agg { func, arg } => {
                let a = arg.as_ref().map_or("*".to_string(), |c| c.column.clone());
                match func {
                    AggFunc::Count => format!("count({a})"),
                    AggFunc::CountDistinct => format!("count(distinct {a})"),
                    AggFunc::Sum => format!("sum({a})"),
                    AggFunc::Min => format!("min({a})"),
                    AggFunc::Max => format!("max({a})"),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CondOp {
    Eq(Literal),
    Lt(Literal),
    Le(Literal),
    Gt(Literal),
    Ge(Literal),
    Between(Literal, Literal),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub column: ColRef,
    pub op: CondOp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub table: String,
    pub left: ColRef,
    pub right: ColRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub items: Vec<SelectItem>,
    pub from: String,
    pub join: Option<Join>,
    pub filter: Vec<Condition>,
    pub group_by: Vec<ColRef>,
    pub order_by: Option<(String, bool)>,
    pub limit: Option<u64>,
    pub asof: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    CreateTable {
        name: String,
        columns: Vec<(String, ColumnType)>,
        layout: Layout,
        mode: WriteMode,
        key: String,
        target: u64,
        checkpoint: Option<u64>,
    },
    CopyInto {
        table: String,
        path: String,
    },
    MergeInto {
        table: String,
        path: String,
        rows: Option<(u64, u64)>,
    },
    DeleteFrom {
        table: String,
        column: String,
        keys: Vec<Literal>,
    },
    Select(Query),
    Optimize {
        table: String,
    },
    Vacuum {
        table: String,
        retain: u64,
    },
}

impl Statement {
    pub fn is_read_only(&self) -> bool {
        matches!(self, Statement::Select(_))
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

pub fn parse(sql: &str) -> Result<Statement> {
    let mut p = Parser {
        tokens: lex(sql)?,
        pos: 0,
    };
    let stmt = p.statement()?;
    while p.eat_sym(";") {}
    if p.pos != p.tokens.len() {
        return Err(p.error("end of statement"));
    }
    Ok(stmt)
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn error(&self, expected: &str) -> EngineError {
        match self.peek() {
            Some(t) => EngineError::Parse(format!("expected {expected}, found {t:?}")),
            None => EngineError::Parse(format!("expected {expected}, found end of input")),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(kw))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Token::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.error(&format!("'{sym}'")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Token::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn string(&mut self) -> Result<String> {
        match self.peek() {
            Some(Token::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error("string literal")),
        }
    }

    fn integer(&mut self) -> Result<u64> {
        match self.peek() {
            Some(Token::Number(s)) => {
                let v = s.parse().map_err(|_| self.error("non-negative integer"))?;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.error("integer")),
        }
    }

    fn literal(&mut self) -> Result<Literal> {
        // DATE '2021-01-01' is accepted as a plain string literal.
        if self.is_kw("date") && matches!(self.tokens.get(self.pos + 1), Some(Token::Str(_))) {
            self.pos += 1;
        }
        match self.peek() {
            Some(Token::Number(s)) => {
                let l = Literal::Number(s.clone());
                self.pos += 1;
                Ok(l)
            }
            Some(Token::Str(s)) => {
                let l = Literal::Str(s.clone());
                self.pos += 1;
                Ok(l)
            }
            _ => Err(self.error("literal")),
        }
    }

    fn col_ref(&mut self) -> Result<ColRef> {
        let first = self.ident()?;
        if self.eat_sym(".") {
            Ok(ColRef {
                table: Some(first),
                column: self.ident()?,
            })
        } else {
            Ok(ColRef {
                table: None,
                column: first,
            })
        }
    }

    fn statement(&mut self) -> Result<Statement> {
        if self.eat_kw("create") {
            self.create()
        } else if self.eat_kw("copy") {
            self.expect_kw("into")?;
            let table = self.ident()?;
            self.expect_kw("from")?;
            Ok(Statement::CopyInto {
                table,
                path: self.string()?,
            })
        } else if self.eat_kw("merge") {
            self.expect_kw("into")?;
            let table = self.ident()?;
            self.expect_kw("using")?;
            let path = self.string()?;
            let rows = if self.eat_kw("rows") {
                let a = self.integer()?;
                self.expect_kw("to")?;
                let b = self.integer()?;
                if b < a {
                    return Err(EngineError::Parse(format!("empty row range {a} TO {b}")));
                }
                Some((a, b))
            } else {
                None
            };
            Ok(Statement::MergeInto { table, path, rows })
        } else if self.eat_kw("delete") {
            self.expect_kw("from")?;
            let table = self.ident()?;
            self.expect_kw("where")?;
            let column = self.col_ref()?.column;
            self.expect_kw("in")?;
            self.expect_sym("(")?;
            let mut keys = vec![self.literal()?];
            while self.eat_sym(",") {
                keys.push(self.literal()?);
            }
            self.expect_sym(")")?;
            Ok(Statement::DeleteFrom {
                table,
                column,
                keys,
            })
        } else if self.eat_kw("select") {
            self.select().map(Statement::Select)
        } else if self.eat_kw("optimize") {
            Ok(Statement::Optimize {
                table: self.ident()?,
            })
        } else if self.eat_kw("vacuum") {
            let table = self.ident()?;
            self.expect_kw("retain")?;
            let retain = self.integer()?;
            self.expect_kw("versions")?;
            Ok(Statement::Vacuum { table, retain })
        } else {
            Err(self.error("statement"))
        }
    }

    fn create(&mut self) -> Result<Statement> {
        self.expect_kw("table")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut columns = Vec::new();
        loop {
            let col = self.ident()?;
            let ty_name = self.ident()?;
            let ty = ColumnType::parse(&ty_name)
                .ok_or_else(|| EngineError::Parse(format!("unknown column type {ty_name}")))?;
            columns.push((col, ty));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        self.expect_kw("using")?;
        let kw = self.ident()?;
        let layout = Layout::from_keyword(&kw)
            .ok_or_else(|| EngineError::Parse(format!("unknown table format {kw}")))?;
        self.expect_kw("mode")?;
        let kw = self.ident()?;
        let mode = WriteMode::from_keyword(&kw)
            .ok_or_else(|| EngineError::Parse(format!("unknown mode {kw}")))?;
        self.expect_kw("key")?;
        let key = self.ident()?;
        self.expect_kw("target")?;
        let target = self.integer()?;
        let checkpoint = if self.eat_kw("checkpoint") {
            Some(self.integer()?)
        } else {
            None
        };
        Ok(Statement::CreateTable {
            name,
            columns,
            layout,
            mode,
            key,
            target,
            checkpoint,
        })
    }

    fn select_item(&mut self) -> Result<SelectItem> {
        if self.eat_sym("*") {
            return Ok(SelectItem::Star);
        }
        let func = ["count", "sum", "min", "max"].into_iter().find(|f| {
            self.is_kw(f) && matches!(self.tokens.get(self.pos + 1), Some(Token::Sym("(")))
        });
        let Some(func) = func else {
            return self.col_ref().map(SelectItem::Column);
        };
        self.pos += 2;
        let item = match func {
            "count" if self.eat_sym("*") => SelectItem::Agg {
                func: AggFunc::Count,
                arg: None,
            },
            "count" => {
                let distinct = self.eat_kw("distinct");
                SelectItem::Agg {
                    func: if distinct {
                        AggFunc::CountDistinct
                    } else {
                        AggFunc::Count
                    },
                    arg: Some(self.col_ref()?),
                }
            }
            other => SelectItem::Agg {
                func: match other {
                    "sum" => AggFunc::Sum,
                    "min" => AggFunc::Min,
                    _ => AggFunc::Max,
                },
                arg: Some(self.col_ref()?),
            },
        };
        self.expect_sym(")")?;
        Ok(item)
    }

    fn condition(&mut self) -> Result<Condition> {
        let column = self.col_ref()?;
        let op = if self.eat_kw("between") {
            let lo = self.literal()?;
            self.expect_kw("and")?;
            CondOp::Between(lo, self.literal()?)
        } else if self.eat_sym("=") {
            CondOp::Eq(self.literal()?)
        } else if self.eat_sym("<=") {
            CondOp::Le(self.literal()?)
        } else if self.eat_sym(">=") {
            CondOp::Ge(self.literal()?)
        } else if self.eat_sym("<") {
            CondOp::Lt(self.literal()?)
        } else if self.eat_sym(">") {
            CondOp::Gt(self.literal()?)
        } else {
            return Err(self.error("comparison operator"));
        };
        Ok(Condition { column, op })
    }

    fn select(&mut self) -> Result<Query> {
        let mut items = vec![self.select_item()?];
        while self.eat_sym(",") {
            items.push(self.select_item()?);
        }
        self.expect_kw("from")?;
        let from = self.ident()?;
        let mut q = Query {
            items,
            from,
            join: None,
            filter: Vec::new(),
            group_by: Vec::new(),
            order_by: None,
            limit: None,
            asof: None,
        };
        if self.eat_kw("join") {
            let table = self.ident()?;
            self.expect_kw("on")?;
            let left = self.col_ref()?;
            self.expect_sym("=")?;
            let right = self.col_ref()?;
            q.join = Some(Join { table, left, right });
        }
        if self.eat_kw("where") {
            q.filter.push(self.condition()?);
            while self.eat_kw("and") {
                q.filter.push(self.condition()?);
            }
        }
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            q.group_by.push(self.col_ref()?);
            while self.eat_sym(",") {
                q.group_by.push(self.col_ref()?);
            }
        }
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            let col = self.col_ref()?.column;
            let desc = if self.eat_kw("desc") {
                true
            } else {
                self.eat_kw("asc");
                false
            };
            q.order_by = Some((col, desc));
        }
        if self.eat_kw("limit") {
            q.limit = Some(self.integer()?);
        }
        if self.eat_kw("as") {
            self.expect_kw("of")?;
            self.expect_kw("version")?;
            q.asof = Some(self.integer()?);
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_create() {
        let s = parse(
            "CREATE TABLE t (k INT64, v DECIMAL, d DATE) USING iceberg MODE mor KEY k TARGET 40;",
        )
        .unwrap();
        match s {
            Statement::CreateTable {
                name,
                columns,
                layout,
                mode,
                target,
                checkpoint,
                ..
            } => {
                assert_eq!(name, "t");
                assert_eq!(columns.len(), 3);
                assert_eq!(layout, Layout::IcebergStyle);
                assert_eq!(mode, WriteMode::Mor);
                assert_eq!(target, 40);
                assert_eq!(checkpoint, None);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_select_with_everything() {
        let s = parse(
            "-- top-k\nSELECT d1_category, sum(amount) FROM fact JOIN dim1 ON fact.dim1_fk = dim1.d1_key \
             WHERE amount > 10.5 AND event_date BETWEEN DATE '2021-01-01' AND '2021-03-31' \
             GROUP BY d1_category ORDER BY d1_category DESC LIMIT 3 AS OF VERSION 7",
        )
        .unwrap();
        let Statement::Select(q) = s else { panic!() };
        assert_eq!(q.items.len(), 2);
        assert_eq!(q.join.as_ref().unwrap().table, "dim1");
        assert_eq!(q.filter.len(), 2);
        assert_eq!(q.group_by.len(), 1);
        assert_eq!(q.order_by, Some(("d1_category".into(), true)));
        assert_eq!(q.limit, Some(3));
        assert_eq!(q.asof, Some(7));
    }

    #[test]
    fn parses_writes() {
        assert_eq!(
            parse("MERGE INTO fact USING '/x/r.csv' ROWS 0 TO 40").unwrap(),
            Statement::MergeInto {
                table: "fact".into(),
                path: "/x/r.csv".into(),
                rows: Some((0, 40))
            }
        );
        assert!(matches!(
            parse("DELETE FROM t WHERE k IN (1, 2, -3)").unwrap(),
            Statement::DeleteFrom { keys, .. } if keys.len() == 3
        ));
        assert_eq!(
            parse("VACUUM t RETAIN 2 VERSIONS").unwrap(),
            Statement::Vacuum {
                table: "t".into(),
                retain: 2
            }
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("SELEC * FROM t").is_err());
        assert!(parse("SELECT * FROM").is_err());
        assert!(parse("SELECT * FROM t WHERE").is_err());
        assert!(parse("SELECT 'oops FROM t").is_err());
        assert!(parse("OPTIMIZE t extra").is_err());
    }
}
