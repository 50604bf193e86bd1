//! The workload tree (workload, phases, sessions, tasks), its YAML form, and
//! parameterized custom-task generators.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{HarnessError, Result};
use crate::library::{Library, StatementTemplate, TaskTemplate};

pub type Params = BTreeMap<String, String>;

pub const DEFAULT_TARGET: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhaseType {
    Load,
    SingleUser,
    Throughput,
    DataMaintenance,
    Optimize,
    TimeTravel,
    Custom,
}

impl PhaseType {
    pub const ALL: [PhaseType; 7] = [
        PhaseType::Load,
        PhaseType::SingleUser,
        PhaseType::Throughput,
        PhaseType::DataMaintenance,
        PhaseType::Optimize,
        PhaseType::TimeTravel,
        PhaseType::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhaseType::Load => "LOAD",
            PhaseType::SingleUser => "SINGLE_USER",
            PhaseType::Throughput => "THROUGHPUT",
            PhaseType::DataMaintenance => "DATA_MAINTENANCE",
            PhaseType::Optimize => "OPTIMIZE",
            PhaseType::TimeTravel => "TIME_TRAVEL",
            PhaseType::Custom => "CUSTOM",
        }
    }
}

impl fmt::Display for PhaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts any YAML scalar as a parameter value.
fn de_params<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Params, D::Error> {
    use serde::de::Error;
    let raw: BTreeMap<String, serde_yaml::Value> = BTreeMap::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            let s = match v {
                serde_yaml::Value::String(s) => s,
                serde_yaml::Value::Number(n) => n.to_string(),
                serde_yaml::Value::Bool(b) => b.to_string(),
                other => {
                    return Err(D::Error::custom(format!(
                        "parameter {k}: expected a scalar, got {other:?}"
                    )))
                }
            };
            Ok((k, s))
        })
        .collect()
}

fn default_target() -> String {
    DEFAULT_TARGET.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRef {
    pub name: String,
    #[serde(
        default,
        deserialize_with = "de_params",
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRef {
    #[serde(rename = "task", default, skip_serializing_if = "Option::is_none")]
    pub task_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorRef>,
    #[serde(
        default,
        deserialize_with = "de_params",
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation_seed: Option<u64>,
}

impl TaskRef {
    pub fn named(name: &str) -> Self {
        Self {
            task_name: Some(name.to_string()),
            generator: None,
            params: Params::new(),
            permutation_seed: None,
        }
    }

    pub fn with_param(mut self, k: &str, v: impl ToString) -> Self {
        self.params.insert(k.to_string(), v.to_string());
        self
    }

    pub fn label(&self) -> String {
        match (&self.task_name, &self.generator) {
            (Some(t), _) => t.clone(),
            (None, Some(g)) => format!("generator:{}", g.name),
            (None, None) => "<none>".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(
        default,
        deserialize_with = "de_params",
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub params: Params,
    pub tasks: Vec<TaskRef>,
}

impl SessionSpec {
    pub fn new(target: &str, tasks: Vec<TaskRef>) -> Self {
        Self {
            target: target.to_string(),
            params: Params::new(),
            tasks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub id: String,
    #[serde(rename = "type")]
    pub phase_type: PhaseType,
    #[serde(
        default,
        deserialize_with = "de_params",
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub params: Params,
    pub sessions: Vec<SessionSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub id: String,
    #[serde(
        default,
        deserialize_with = "de_params",
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub params: Params,
    pub phases: Vec<PhaseSpec>,
}

impl WorkloadSpec {
    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("workload serializes")
    }

    pub fn targets(&self) -> BTreeSet<&str> {
        self.phases
            .iter()
            .flat_map(|p| p.sessions.iter().map(|s| s.target.as_str()))
            .collect()
    }
}

/// Parses a workload document without consulting a task library.
pub fn parse_document(document: &str) -> Result<WorkloadSpec> {
    serde_yaml::from_str(document).map_err(|e| HarnessError::Syntax(e.to_string()))
}

/// Parses and validates a workload document against `library`.
pub fn parse_workload(document: &str, library: &Library) -> Result<WorkloadSpec> {
    let spec = parse_document(document)?;
    validate(&spec, library)?;
    Ok(spec)
}

pub fn load_workload(path: &Path, library: &Library) -> Result<WorkloadSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_workload(&text, library)
}

pub fn validate(spec: &WorkloadSpec, library: &Library) -> Result<()> {
    let bad = |m: String| Err(HarnessError::Validation(m));
    if spec.phases.is_empty() {
        return bad("workload has no phases".into());
    }
    let mut seen = BTreeSet::new();
    for phase in &spec.phases {
        if !seen.insert(phase.id.as_str()) {
            return bad(format!("duplicate phase id {}", phase.id));
        }
        if phase.sessions.is_empty() {
            return bad(format!("phase {} has no sessions", phase.id));
        }
        for (si, session) in phase.sessions.iter().enumerate() {
            if session.tasks.is_empty() {
                return bad(format!("phase {} session {si} has no tasks", phase.id));
            }
            for task in &session.tasks {
                match (&task.task_name, &task.generator) {
                    (Some(name), None) => {
                        if !library.has_task(name) {
                            return bad(format!("phase {}: unknown task {name}", phase.id));
                        }
                    }
                    (None, Some(g)) => {
                        if !is_registered(&g.name) {
                            return Err(HarnessError::GeneratorNotFound(g.name.clone()));
                        }
                    }
                    _ => {
                        return bad(format!(
                            "phase {}: a task needs exactly one of `task` or `generator`",
                            phase.id
                        ))
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn max_concurrency(spec: &WorkloadSpec) -> usize {
    spec.phases
        .iter()
        .map(|p| p.sessions.len())
        .max()
        .unwrap_or(0)
        .max(1)
}

/// Introspection a generator may use to shape its tasks.
pub trait CatalogView {
    fn tables(&self) -> Result<Vec<String>>;
    fn row_count(&self, table: &str) -> Result<u64>;
    /// Data rows of a staged source file.
    fn source_rows(&self, path: &Path) -> Result<u64>;
}

pub const GENERATORS: [&str; 1] = ["batched_dm"];

pub fn is_registered(name: &str) -> bool {
    GENERATORS.contains(&name)
}

pub fn expand_custom_task(
    generator: &GeneratorRef,
    catalog: &dyn CatalogView,
) -> Result<Vec<TaskTemplate>> {
    match generator.name.as_str() {
        "batched_dm" => batched_dm(generator, catalog),
        other => Err(HarnessError::GeneratorNotFound(other.to_string())),
    }
}

/// Splits a refresh source of R rows into ceil(R / batch_rows) MERGE tasks.
fn batched_dm(generator: &GeneratorRef, catalog: &dyn CatalogView) -> Result<Vec<TaskTemplate>> {
    let fail = |message: String| HarnessError::Generator {
        name: generator.name.clone(),
        message,
    };
    let source = generator
        .params
        .get("source")
        .ok_or_else(|| fail("missing parameter `source`".into()))?;
    let table = generator.params.get("table").map_or("fact", String::as_str);
    let batch: u64 = generator
        .params
        .get("batch_rows")
        .ok_or_else(|| fail("missing parameter `batch_rows`".into()))?
        .parse()
        .map_err(|e| fail(format!("batch_rows: {e}")))?;
    if batch == 0 {
        return Err(fail("batch_rows must be >= 1".into()));
    }
    let total = catalog
        .source_rows(Path::new(source))
        .map_err(|e| fail(e.to_string()))?;
    let mut tasks = Vec::new();
    let mut start = 0;
    while start < total {
        let end = (start + batch).min(total);
        let sql = format!("MERGE INTO {table} USING '{source}' ROWS {start} TO {end}");
        tasks.push(TaskTemplate {
            name: format!("batched_dm[{start}..{end})"),
            statements: vec![StatementTemplate::new(&sql)],
            source_path: format!("generator:{}", generator.name),
        });
        start = end;
    }
    Ok(tasks)
}
