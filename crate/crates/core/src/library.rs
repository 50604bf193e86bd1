//! Statement templates stored on disk as
//! `<root>/<task>/<dialect>/<lst>/NN_name.sql`, with `generic` as the LST
//! fallback directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use lsth_engine::Layout;

use crate::builtin::BUILTIN_FILES;
use crate::error::{HarnessError, Result};
use crate::workload::Params;

pub const DEFAULT_DIALECT: &str = "minisql";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LstKey {
    DeltaStyle,
    IcebergStyle,
    HudiStyle,
    Generic,
}

impl LstKey {
    pub fn dir(self) -> &'static str {
        match self {
            LstKey::DeltaStyle => "delta",
            LstKey::IcebergStyle => "iceberg",
            LstKey::HudiStyle => "hudi",
            LstKey::Generic => "generic",
        }
    }

    /// Maps an `lst` binding (`delta`, `iceberg`, `hudi`, or a style name).
    pub fn from_binding(s: &str) -> Self {
        let s = s.to_ascii_lowercase();
        let s = s.trim_end_matches("_style");
        match Layout::from_keyword(s) {
            Some(Layout::DeltaStyle) => LstKey::DeltaStyle,
            Some(Layout::IcebergStyle) => LstKey::IcebergStyle,
            Some(Layout::HudiStyle) => LstKey::HudiStyle,
            None => LstKey::Generic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DialectKey {
    pub dialect: String,
    pub lst: LstKey,
}

impl DialectKey {
    pub fn new(dialect: &str, lst: LstKey) -> Self {
        Self {
            dialect: dialect.to_string(),
            lst,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementTemplate {
    pub raw_text: String,
    pub variables: BTreeSet<String>,
}

impl StatementTemplate {
    pub fn new(raw: &str) -> Self {
        Self {
            raw_text: raw.to_string(),
            variables: scan_variables(raw).into_iter().map(|(_, _, n)| n).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskTemplate {
    pub name: String,
    pub statements: Vec<StatementTemplate>,
    pub source_path: String,
}

fn is_name_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_name_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

/// `(start, end, name)` of every well-formed `${name}` in `text`.
fn scan_variables(text: &str) -> Vec<(usize, usize, String)> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i + 2 < b.len() {
        if b[i] == b'$' && b[i + 1] == b'{' && is_name_start(b[i + 2]) {
            let mut j = i + 3;
            while j < b.len() && is_name_char(b[j]) {
                j += 1;
            }
            if j < b.len() && b[j] == b'}' {
                out.push((i, j + 1, text[i + 2..j].to_string()));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Replaces every `${name}`; fails on the first unbound variable.
pub fn substitute(tpl: &StatementTemplate, bindings: &Params) -> Result<String> {
    let mut out = String::with_capacity(tpl.raw_text.len());
    let mut last = 0;
    for (start, end, name) in scan_variables(&tpl.raw_text) {
        let value = bindings
            .get(&name)
            .ok_or_else(|| HarnessError::MissingVariable(name.clone()))?;
        out.push_str(&tpl.raw_text[last..start]);
        out.push_str(value);
        last = end;
    }
    out.push_str(&tpl.raw_text[last..]);
    if out.contains("${") {
        return Err(HarnessError::MissingVariable(format!(
            "malformed reference in: {out}"
        )));
    }
    Ok(out)
}

/// Splits on `;` outside quotes, comments and parentheses. Pieces holding
/// only whitespace and comments are dropped.
pub fn split_statements(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut has_code = false;
    let mut depth = 0i32;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if c == '-' && next == Some('-') {
            while i < chars.len() && chars[i] != '\n' {
                cur.push(chars[i]);
                i += 1;
            }
            continue;
        }
        if c == '/' && next == Some('*') {
            cur.push_str("/*");
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                cur.push(chars[i]);
                i += 1;
            }
            if i < chars.len() {
                cur.push_str("*/");
                i += 2;
            }
            continue;
        }
        if c == '\'' || c == '"' {
            cur.push(c);
            i += 1;
            while i < chars.len() {
                cur.push(chars[i]);
                if chars[i] == c {
                    if chars.get(i + 1) == Some(&c) {
                        cur.push(c);
                        i += 2;
                        continue;
                    }
                    break;
                }
                i += 1;
            }
            i += 1;
            has_code = true;
            continue;
        }
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ';' if depth <= 0 => {
                if has_code {
                    out.push(cur.trim().to_string());
                }
                cur.clear();
                has_code = false;
                i += 1;
                continue;
            }
            _ => {}
        }
        if !c.is_whitespace() {
            has_code = true;
        }
        cur.push(c);
        i += 1;
    }
    if has_code {
        out.push(cur.trim().to_string());
    }
    out
}

/// Resolves `name` to the most specific template: `(dialect, lst)` first,
/// then `(dialect, generic)`. Statement files are read in lexicographic order.
pub fn resolve_task(name: &str, key: &DialectKey, library_root: &Path) -> Result<TaskTemplate> {
    let task_dir = library_root.join(name);
    if !task_dir.is_dir() {
        return Err(HarnessError::TaskNotFound(name.to_string()));
    }
    let specific = task_dir.join(&key.dialect).join(key.lst.dir());
    let generic = task_dir.join(&key.dialect).join(LstKey::Generic.dir());
    let dir = [specific, generic]
        .into_iter()
        .find(|d| d.is_dir())
        .ok_or_else(|| HarnessError::TaskNotFound(format!("{name} for dialect {}", key.dialect)))?;
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| HarnessError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "sql"))
        .collect();
    files.sort();
    let mut statements = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).map_err(|e| HarnessError::io(f, e))?;
        statements.extend(
            split_statements(&text)
                .iter()
                .map(|s| StatementTemplate::new(s)),
        );
    }
    if statements.is_empty() {
        return Err(HarnessError::EmptyTask(name.to_string()));
    }
    Ok(TaskTemplate {
        name: name.to_string(),
        statements,
        source_path: dir.display().to_string(),
    })
}

/// A task library rooted at a directory.
#[derive(Debug, Clone)]
pub struct Library {
    root: PathBuf,
}

impl Library {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(HarnessError::Config(format!(
                "library {} is not a directory",
                root.display()
            )));
        }
        Ok(Self { root })
    }

    /// Writes the shipped library under `dir` and opens it.
    pub fn materialize_builtin(dir: &Path) -> Result<Self> {
        for (rel, body) in BUILTIN_FILES {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
            }
            fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
        }
        Self::open(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn has_task(&self, name: &str) -> bool {
        !name.is_empty() && !name.contains(['/', '\\', '.']) && self.root.join(name).is_dir()
    }

    pub fn resolve(&self, name: &str, key: &DialectKey) -> Result<TaskTemplate> {
        resolve_task(name, key, &self.root)
    }
}
