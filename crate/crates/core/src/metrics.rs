//! Per-phase aggregates, degradation rate (S_DR) and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lsth_engine::StorageCounters;

use crate::error::{HarnessError, Result};
use crate::telemetry::{EventRecord, Status};
use crate::workload::PhaseType;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub phase_type: PhaseType,
    pub metric_name: String,
    /// Phase ids of the iterations, parallel to `values`.
    pub phase_ids: Vec<String>,
    pub values: Vec<f64>,
    pub direction: Direction,
}

impl MetricSeries {
    pub fn degradation_rate(&self) -> Result<f64> {
        degradation_rate(&self.values, self.direction)
    }
}

/// Mean relative change between successive iterations. HIGHER_BETTER
/// values are replaced by their reciprocals first.
pub fn degradation_rate(values: &[f64], direction: Direction) -> Result<f64> {
    if values.len() < 2 {
        return Err(HarnessError::InsufficientData(values.len()));
    }
    let m: Vec<f64> = match direction {
        Direction::LowerBetter => values.to_vec(),
        Direction::HigherBetter => values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v == 0.0 {
                    Err(HarnessError::DivisionByZero(i))
                } else {
                    Ok(1.0 / v)
                }
            })
            .collect::<Result<_>>()?,
    };
    let mut sum = 0.0;
    for i in 1..m.len() {
        if m[i - 1] == 0.0 {
            return Err(HarnessError::DivisionByZero(i - 1));
        }
        sum += (m[i] - m[i - 1]) / m[i - 1];
    }
    Ok(sum / (m.len() - 1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAggregate {
    pub phase_id: String,
    pub phase_type: PhaseType,
    /// Sum of statement durations.
    pub statement_time_s: f64,
    /// Last statement end minus first statement start.
    pub phase_span_s: f64,
    pub counters: StorageCounters,
    /// Statements that ran (succeeded or failed).
    pub statements: usize,
    pub statements_succeeded: usize,
    pub statement_failures: usize,
    first_start_ns: i128,
}

impl PhaseAggregate {
    /// Completed statements per second of phase span.
    pub fn throughput(&self) -> f64 {
        if self.phase_span_s > 0.0 {
            self.statements_succeeded as f64 / self.phase_span_s
        } else {
            0.0
        }
    }
}

pub fn aggregate_phase(events: &[EventRecord], phase_id: &str) -> Result<PhaseAggregate> {
    let mine: Vec<&EventRecord> = events.iter().filter(|e| e.phase_id == phase_id).collect();
    let first = mine
        .first()
        .ok_or_else(|| HarnessError::UnknownPhase(phase_id.to_string()))?;
    let ran: Vec<&&EventRecord> = mine
        .iter()
        .filter(|e| e.status != Status::Skipped)
        .collect();
    let mut agg = PhaseAggregate {
        phase_id: phase_id.to_string(),
        phase_type: first.phase_type,
        statement_time_s: 0.0,
        phase_span_s: 0.0,
        counters: StorageCounters::default(),
        statements: ran.len(),
        statements_succeeded: ran.iter().filter(|e| e.status == Status::Success).count(),
        statement_failures: ran.iter().filter(|e| e.status == Status::Failure).count(),
        first_start_ns: mine.iter().map(|e| e.start_ns()).min().unwrap_or_default(),
    };
    let mut total_ns: i128 = 0;
    for e in &ran {
        total_ns += e.duration_ns as i128;
        agg.counters += e.counters;
    }
    agg.statement_time_s = total_ns as f64 / 1e9;
    if let (Some(lo), Some(hi)) = (
        ran.iter().map(|e| e.start_ns()).min(),
        ran.iter().map(|e| e.end_ns()).max(),
    ) {
        agg.phase_span_s = (hi - lo) as f64 / 1e9;
    }
    Ok(agg)
}

/// Aggregates of every phase, in order of first statement start.
pub fn aggregate_all(events: &[EventRecord]) -> Vec<PhaseAggregate> {
    let mut ids: Vec<&str> = Vec::new();
    for e in events {
        if !ids.contains(&e.phase_id.as_str()) {
            ids.push(&e.phase_id);
        }
    }
    let mut aggs: Vec<PhaseAggregate> = ids
        .into_iter()
        .map(|id| aggregate_phase(events, id).expect("phase present"))
        .collect();
    aggs.sort_by_key(|a| a.first_start_ns);
    aggs
}

type Extract = fn(&PhaseAggregate) -> f64;

/// Metrics computed per phase, with their direction.
pub const METRICS: [(&str, Direction, Extract); 8] = [
    ("latency_s", Direction::LowerBetter, |a| a.statement_time_s),
    ("phase_span_s", Direction::LowerBetter, |a| a.phase_span_s),
    ("files_opened", Direction::LowerBetter, |a| {
        a.counters.files_opened as f64
    }),
    ("files_written", Direction::LowerBetter, |a| {
        a.counters.files_written as f64
    }),
    ("list_calls", Direction::LowerBetter, |a| {
        a.counters.list_calls as f64
    }),
    ("bytes_read", Direction::LowerBetter, |a| {
        a.counters.bytes_read as f64
    }),
    ("bytes_written", Direction::LowerBetter, |a| {
        a.counters.bytes_written as f64
    }),
    (
        "throughput_stmt_per_s",
        Direction::HigherBetter,
        PhaseAggregate::throughput,
    ),
];

pub fn series_from_aggregates(aggs: &[PhaseAggregate]) -> Vec<MetricSeries> {
    let mut by_type: BTreeMap<PhaseType, Vec<&PhaseAggregate>> = BTreeMap::new();
    for a in aggs {
        by_type.entry(a.phase_type).or_default().push(a);
    }
    let mut out = Vec::new();
    for (phase_type, group) in by_type {
        for (name, direction, f) in METRICS {
            out.push(MetricSeries {
                phase_type,
                metric_name: name.to_string(),
                phase_ids: group.iter().map(|a| a.phase_id.clone()).collect(),
                values: group.iter().map(|a| f(a)).collect(),
                direction,
            });
        }
    }
    out
}

/// One series per (phase type, metric), iterations in occurrence order.
pub fn series_by_phase_type(events: &[EventRecord]) -> Vec<MetricSeries> {
    series_from_aggregates(&aggregate_all(events))
}

/// Six significant digits.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if (-4..6).contains(&exp) {
        format!("{:.*}", (5 - exp) as usize, x)
    } else {
        sci
    }
}

/// Telemetry of one experiment, ready to report.
#[derive(Debug, Clone)]
pub struct ExperimentMetrics {
    pub label: String,
    pub aggregates: Vec<PhaseAggregate>,
    pub series: Vec<MetricSeries>,
}

impl ExperimentMetrics {
    pub fn from_events(label: &str, events: &[EventRecord]) -> Self {
        let aggregates = aggregate_all(events);
        let series = series_from_aggregates(&aggregates);
        Self {
            label: label.to_string(),
            aggregates,
            series,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdrRow {
    pub phase_type: PhaseType,
    pub metric: String,
    /// Successive deltas behind the value.
    pub n: usize,
    /// One value per experiment; `None` where undefined.
    pub per_experiment: Vec<Option<f64>>,
    pub combined: Option<f64>,
}

pub fn sdr_table(experiments: &[ExperimentMetrics]) -> Vec<SdrRow> {
    let mut keys: Vec<(PhaseType, String)> = Vec::new();
    for e in experiments {
        for s in &e.series {
            let k = (s.phase_type, s.metric_name.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    keys.sort();
    keys.into_iter()
        .map(|(phase_type, metric)| {
            let mut n = 0;
            let per_experiment: Vec<Option<f64>> = experiments
                .iter()
                .map(|e| {
                    let s = e
                        .series
                        .iter()
                        .find(|s| s.phase_type == phase_type && s.metric_name == metric)?;
                    let v = s.degradation_rate().ok()?;
                    n += s.values.len() - 1;
                    Some(v)
                })
                .collect();
            let defined: Vec<f64> = per_experiment.iter().flatten().copied().collect();
            let combined =
                (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            SdrRow {
                phase_type,
                metric,
                n,
                per_experiment,
                combined,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), format_sig)
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub markdown: PathBuf,
    pub csv: PathBuf,
    pub plotdata: Vec<PathBuf>,
}

/// Writes `report.md`, `report.csv` and `plotdata/*.csv`. The CSV holds the
/// combined value of each (phase type, metric) row.
pub fn emit_report(experiments: &[ExperimentMetrics], out_dir: &Path) -> Result<ReportFiles> {
    let plot_dir = out_dir.join("plotdata");
    fs::create_dir_all(&plot_dir).map_err(|e| HarnessError::io(&plot_dir, e))?;
    let table = sdr_table(experiments);
    let write =
        |path: &Path, body: &str| fs::write(path, body).map_err(|e| HarnessError::io(path, e));

    let mut csv = String::from("phase_type,metric,n,sdr\n");
    for r in &table {
        writeln!(
            csv,
            "{},{},{},{}",
            r.phase_type,
            r.metric,
            r.n,
            opt(r.combined)
        )
        .unwrap();
    }
    let csv_path = out_dir.join("report.csv");
    write(&csv_path, &csv)?;

    let mut md = String::from("# Benchmark report\n\n");
    for e in experiments {
        writeln!(md, "## Phases: {}\n", e.label).unwrap();
        md.push_str("| phase | type | statements | failures | statement_time_s | phase_span_s | files_opened | files_written | list_calls | bytes_read | bytes_written |\n");
        md.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        for a in &e.aggregates {
            let c = &a.counters;
            writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                a.phase_id,
                a.phase_type,
                a.statements,
                a.statement_failures,
                format_sig(a.statement_time_s),
                format_sig(a.phase_span_s),
                c.files_opened,
                c.files_written,
                c.list_calls,
                c.bytes_read,
                c.bytes_written
            )
            .unwrap();
        }
        md.push('\n');
    }
    md.push_str("## S_DR by phase type and metric\n\n");
    md.push_str("| phase_type | metric | n |");
    for e in experiments {
        write!(md, " {} |", e.label).unwrap();
    }
    md.push_str(" combined (mean) |\n|---|---|---|");
    for _ in experiments {
        md.push_str("---|");
    }
    md.push_str("---|\n");
    for r in &table {
        write!(md, "| {} | {} | {} |", r.phase_type, r.metric, r.n).unwrap();
        for v in &r.per_experiment {
            write!(md, " {} |", opt(*v)).unwrap();
        }
        writeln!(md, " {} |", opt(r.combined)).unwrap();
    }
    let md_path = out_dir.join("report.md");
    write(&md_path, &md)?;

    let mut plotdata = Vec::new();
    for e in experiments {
        for s in &e.series {
            let mut name = format!("{}__{}.csv", s.phase_type, s.metric_name);
            if experiments.len() > 1 {
                name = format!("{}__{name}", file_safe(&e.label));
            }
            let mut body = String::from("iteration,phase_id,value\n");
            for (i, (id, v)) in s.phase_ids.iter().zip(&s.values).enumerate() {
                writeln!(body, "{i},{id},{}", format_sig(*v)).unwrap();
            }
            let path = plot_dir.join(name);
            write(&path, &body)?;
            plotdata.push(path);
        }
    }
    Ok(ReportFiles {
        markdown: md_path,
        csv: csv_path,
        plotdata,
    })
}
