//! Event and counter-sample records, JSONL persistence and loading.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use lsth_engine::StorageCounters;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::workload::PhaseType;

pub const SCHEMA_VERSION: u32 = 1;
pub const EVENTS_FILE: &str = "events.jsonl";
pub const COUNTERS_FILE: &str = "counters.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Success,
    Failure,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub v: u32,
    pub experiment_id: String,
    pub phase_id: String,
    pub phase_type: PhaseType,
    pub session_idx: usize,
    /// Ordinal of the task within its session.
    pub task_idx: usize,
    pub task_name: String,
    pub statement_idx: usize,
    pub status: Status,
    pub wall_start: DateTime<Utc>,
    pub duration_ns: i64,
    pub counters: StorageCounters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_text: Option<String>,
}

impl EventRecord {
    pub fn validate(&self) -> Result<()> {
        if self.v != SCHEMA_VERSION {
            return Err(HarnessError::InvalidRecord(format!(
                "unsupported schema version {}",
                self.v
            )));
        }
        if self.duration_ns < 0 {
            return Err(HarnessError::InvalidRecord(format!(
                "negative duration {} ns",
                self.duration_ns
            )));
        }
        Ok(())
    }

    pub fn wall_end(&self) -> DateTime<Utc> {
        self.wall_start + chrono::Duration::nanoseconds(self.duration_ns)
    }

    pub fn start_ns(&self) -> i128 {
        timestamp_ns(self.wall_start)
    }

    pub fn end_ns(&self) -> i128 {
        self.start_ns() + self.duration_ns as i128
    }
}

/// Nanoseconds since the Unix epoch.
pub fn timestamp_ns(t: DateTime<Utc>) -> i128 {
    t.timestamp() as i128 * 1_000_000_000 + t.timestamp_subsec_nanos() as i128
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterSample {
    pub v: u32,
    pub source: String,
    pub wall_time: DateTime<Utc>,
    pub counters: StorageCounters,
}

impl CounterSample {
    pub fn validate(&self) -> Result<()> {
        if self.v != SCHEMA_VERSION {
            return Err(HarnessError::InvalidRecord(format!(
                "unsupported schema version {}",
                self.v
            )));
        }
        Ok(())
    }
}

/// Destination of telemetry. Implementations accept concurrent appends.
pub trait TelemetrySink: Send + Sync {
    fn append_event(&self, record: &EventRecord) -> Result<()>;
    fn append_sample(&self, sample: &CounterSample) -> Result<()>;
}

struct Appender {
    path: PathBuf,
    file: Mutex<File>,
}

impl Appender {
    fn open(path: PathBuf) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| HarnessError::io(&path, e))?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    fn append<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut line =
            serde_json::to_string(value).map_err(|e| HarnessError::InvalidRecord(e.to_string()))?;
        line.push('\n');
        let mut f = self.file.lock().expect("telemetry file lock");
        f.write_all(line.as_bytes())
            .map_err(|e| HarnessError::io(&self.path, e))
    }
}

/// Appends to `events.jsonl` and `counters.jsonl` in a directory.
pub struct JsonlSink {
    events: Appender,
    samples: Appender,
}

impl JsonlSink {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(Self {
            events: Appender::open(dir.join(EVENTS_FILE))?,
            samples: Appender::open(dir.join(COUNTERS_FILE))?,
        })
    }
}

impl TelemetrySink for JsonlSink {
    fn append_event(&self, record: &EventRecord) -> Result<()> {
        record.validate()?;
        self.events.append(record)
    }

    fn append_sample(&self, sample: &CounterSample) -> Result<()> {
        sample.validate()?;
        self.samples.append(sample)
    }
}

#[derive(Default)]
pub struct MemorySink {
    events: Mutex<Vec<EventRecord>>,
    samples: Mutex<Vec<CounterSample>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<EventRecord> {
        self.events.lock().expect("sink lock").clone()
    }

    pub fn samples(&self) -> Vec<CounterSample> {
        self.samples.lock().expect("sink lock").clone()
    }
}

impl TelemetrySink for MemorySink {
    fn append_event(&self, record: &EventRecord) -> Result<()> {
        record.validate()?;
        self.events.lock().expect("sink lock").push(record.clone());
        Ok(())
    }

    fn append_sample(&self, sample: &CounterSample) -> Result<()> {
        sample.validate()?;
        self.samples.lock().expect("sink lock").push(sample.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Loaded {
    pub events: Vec<EventRecord>,
    pub samples: Vec<CounterSample>,
    pub diagnostics: Vec<Diagnostic>,
}

trait Record: DeserializeOwned {
    fn check(&self) -> Result<()>;
}

impl Record for EventRecord {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl Record for CounterSample {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

fn load_lines<T: Record>(
    path: &Path,
    mode: LoadMode,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<T>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.check().map(|_| r).map_err(|e| e.to_string()));
        match (parsed, mode) {
            (Ok(r), _) => out.push(r),
            (Err(message), LoadMode::Strict) => {
                return Err(HarnessError::Format {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                })
            }
            (Err(message), LoadMode::Lenient) => diagnostics.push(Diagnostic {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            }),
        }
    }
    Ok(out)
}

pub fn load_events(path: &Path, mode: LoadMode) -> Result<(Vec<EventRecord>, Vec<Diagnostic>)> {
    let mut d = Vec::new();
    let events = load_lines(path, mode, &mut d)?;
    Ok((events, d))
}

pub fn load_samples(path: &Path, mode: LoadMode) -> Result<(Vec<CounterSample>, Vec<Diagnostic>)> {
    let mut d = Vec::new();
    let samples = load_lines(path, mode, &mut d)?;
    Ok((samples, d))
}

/// Loads an experiment output directory. `counters.jsonl` is optional.
pub fn load(dir: &Path, mode: LoadMode) -> Result<Loaded> {
    let mut out = Loaded::default();
    out.events = load_lines(&dir.join(EVENTS_FILE), mode, &mut out.diagnostics)?;
    let counters = dir.join(COUNTERS_FILE);
    if counters.exists() {
        out.samples = load_lines(&counters, mode, &mut out.diagnostics)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn event(session: usize, stmt: usize, duration_ns: i64) -> EventRecord {
        EventRecord {
            v: SCHEMA_VERSION,
            experiment_id: "e".into(),
            phase_id: "p".into(),
            phase_type: PhaseType::SingleUser,
            session_idx: session,
            task_idx: 0,
            task_name: "single_user".into(),
            statement_idx: stmt,
            status: Status::Success,
            wall_start: Utc::now(),
            duration_ns,
            counters: StorageCounters {
                files_opened: stmt as u64,
                ..Default::default()
            },
            error_text: None,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sink = JsonlSink::create(dir.path()).unwrap();
        let mut written = Vec::new();
        for i in 0..5 {
            let mut e = event(0, i, 10 * i as i64);
            if i == 3 {
                e.status = Status::Failure;
                e.error_text = Some("boom".into());
            }
            sink.append_event(&e).unwrap();
            written.push(e);
        }
        let sample = CounterSample {
            v: SCHEMA_VERSION,
            source: "default".into(),
            wall_time: Utc::now(),
            counters: StorageCounters::default(),
        };
        sink.append_sample(&sample).unwrap();
        let loaded = load(dir.path(), LoadMode::Strict).unwrap();
        assert_eq!(loaded.events, written);
        assert_eq!(loaded.samples, [sample]);
        assert!(loaded.diagnostics.is_empty());
    }

    #[test]
    fn negative_duration_rejected() {
        let sink = MemorySink::new();
        assert!(matches!(
            sink.append_event(&event(0, 0, -1)),
            Err(HarnessError::InvalidRecord(_))
        ));
        assert!(sink.events().is_empty());
    }

    #[test]
    fn malformed_line_modes() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::new();
        for i in 0..10 {
            if i == 6 {
                text.push_str("{not json\n");
            } else {
                text.push_str(&serde_json::to_string(&event(0, i, 1)).unwrap());
                text.push('\n');
            }
        }
        std::fs::write(dir.path().join(EVENTS_FILE), text).unwrap();
        let err = load(dir.path(), LoadMode::Strict).unwrap_err();
        assert!(matches!(err, HarnessError::Format { line: 7, .. }));
        let loaded = load(dir.path(), LoadMode::Lenient).unwrap();
        assert_eq!(loaded.events.len(), 9);
        assert_eq!(loaded.diagnostics.len(), 1);
        assert_eq!(loaded.diagnostics[0].line, 7);
    }

    #[test]
    fn empty_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(EVENTS_FILE), "").unwrap();
        std::fs::write(dir.path().join(COUNTERS_FILE), "").unwrap();
        assert_eq!(
            load(dir.path(), LoadMode::Strict).unwrap(),
            Loaded::default()
        );
    }

    #[test]
    fn missing_events_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load(dir.path(), LoadMode::Strict),
            Err(HarnessError::Io { .. })
        ));
    }

    #[test]
    fn wall_end_matches_duration() {
        let e = event(0, 0, 1_500);
        assert_eq!(e.end_ns() - e.start_ns(), 1_500);
        assert_eq!(timestamp_ns(e.wall_end()), e.end_ns());
    }
}
