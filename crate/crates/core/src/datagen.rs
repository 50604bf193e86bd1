//! Deterministic star-schema generator: a fact table, two dimensions and
//! numbered refresh streams.
//!
//! Every file is a pure function of the [`GenSpec`]. Randomness comes from
//! [`SplitMix64`] streams keyed by file, so regenerating one refresh does not
//! depend on having generated the others.

use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::prng::SplitMix64;

pub const FORMAT_VERSION: u32 = 1;
pub const DIM_RATIO: u64 = 100;
pub const FACT_COLUMNS: [&str; 5] = ["key", "dim1_fk", "dim2_fk", "amount", "event_date"];
pub const REFRESH_COLUMNS: [&str; 6] = ["op", "key", "dim1_fk", "dim2_fk", "amount", "event_date"];

const STREAM_FACT: u64 = 1;
const STREAM_DIM1: u64 = 2;
const STREAM_DIM2: u64 = 3;
const STREAM_REFRESH: u64 = 1000;
const DATE_SPAN_DAYS: u64 = 1096;
const REGIONS: [&str; 4] = ["north", "south", "east", "west"];
const CATEGORIES: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub scale_rows: u64,
    pub seed: u64,
    pub refresh_fraction: f64,
    pub refresh_count: u32,
}

impl GenSpec {
    pub fn new(scale_rows: u64, seed: u64) -> Self {
        Self {
            scale_rows,
            seed,
            refresh_fraction: 0.1,
            refresh_count: 0,
        }
    }

    pub fn with_refreshes(mut self, count: u32) -> Self {
        self.refresh_count = count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_rows < 1 {
            return Err(HarnessError::Config("scale_rows must be >= 1".into()));
        }
        if !(self.refresh_fraction > 0.0 && self.refresh_fraction <= 1.0) {
            return Err(HarnessError::Config(
                "refresh_fraction must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn dim_rows(&self) -> u64 {
        self.scale_rows.div_ceil(DIM_RATIO).max(1)
    }

    pub fn upserts_per_refresh(&self) -> u64 {
        ((self.refresh_fraction * self.scale_rows as f64).round() as u64).min(self.scale_rows)
    }

    pub fn inserts_per_refresh(&self) -> u64 {
        (self.upserts_per_refresh() as f64 * 0.10).round() as u64
    }

    pub fn deletes_per_refresh(&self) -> u64 {
        let wanted = (self.scale_rows as f64 * 0.05).round() as u64;
        wanted.min(self.scale_rows - self.upserts_per_refresh())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: GenSpec,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactRow {
    pub key: u64,
    pub dim1_fk: u64,
    pub dim2_fk: u64,
    /// Hundredths.
    pub amount: i64,
    pub event_date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefreshOp {
    Upsert,
    Insert,
    Delete,
}

impl RefreshOp {
    pub fn code(self) -> &'static str {
        match self {
            RefreshOp::Upsert => "U",
            RefreshOp::Insert => "I",
            RefreshOp::Delete => "D",
        }
    }
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

fn random_fact(rng: &mut SplitMix64, key: u64, dims: u64) -> FactRow {
    FactRow {
        key,
        dim1_fk: 1 + rng.below(dims),
        dim2_fk: 1 + rng.below(dims),
        amount: rng.below(100_000) as i64,
        event_date: epoch() + Duration::days(rng.below(DATE_SPAN_DAYS) as i64),
    }
}

pub fn fact_rows(spec: &GenSpec) -> Vec<FactRow> {
    let mut rng = SplitMix64::stream(spec.seed, STREAM_FACT);
    let dims = spec.dim_rows();
    (1..=spec.scale_rows)
        .map(|k| random_fact(&mut rng, k, dims))
        .collect()
}

/// Rows of refresh `i` (1-based): upserts of existing keys, then new keys,
/// then deletes of existing keys disjoint from the upserts.
pub fn refresh_rows(spec: &GenSpec, i: u32) -> Result<Vec<(RefreshOp, FactRow)>> {
    if i < 1 || i > spec.refresh_count {
        return Err(HarnessError::OutOfRange(format!(
            "refresh {i} not in 1..={}",
            spec.refresh_count
        )));
    }
    let mut rng = SplitMix64::stream(spec.seed, STREAM_REFRESH + i as u64);
    let dims = spec.dim_rows();
    let (u, n_ins, d) = (
        spec.upserts_per_refresh(),
        spec.inserts_per_refresh(),
        spec.deletes_per_refresh(),
    );
    // Partial Fisher-Yates over the base keys picks u + d distinct keys.
    let mut keys: Vec<u64> = (1..=spec.scale_rows).collect();
    let picks = (u + d) as usize;
    for slot in 0..picks {
        let j = slot + rng.below((keys.len() - slot) as u64) as usize;
        keys.swap(slot, j);
    }
    let mut upserts = keys[..u as usize].to_vec();
    let mut deletes = keys[u as usize..picks].to_vec();
    upserts.sort_unstable();
    deletes.sort_unstable();

    let mut out = Vec::with_capacity(picks + n_ins as usize);
    for k in upserts {
        out.push((RefreshOp::Upsert, random_fact(&mut rng, k, dims)));
    }
    let first_new = spec.scale_rows + (i as u64 - 1) * n_ins + 1;
    for k in first_new..first_new + n_ins {
        out.push((RefreshOp::Insert, random_fact(&mut rng, k, dims)));
    }
    for k in deletes {
        out.push((
            RefreshOp::Delete,
            FactRow {
                key: k,
                dim1_fk: 0,
                dim2_fk: 0,
                amount: 0,
                event_date: epoch(),
            },
        ));
    }
    Ok(out)
}

pub fn format_amount(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", cents.abs() / 100, cents.abs() % 100)
}

fn fact_record(r: &FactRow) -> Vec<String> {
    vec![
        r.key.to_string(),
        r.dim1_fk.to_string(),
        r.dim2_fk.to_string(),
        format_amount(r.amount),
        r.event_date.format("%Y-%m-%d").to_string(),
    ]
}

fn write_csv(
    out_dir: &Path,
    name: &str,
    header: &[&str],
    records: impl Iterator<Item = Vec<String>>,
) -> Result<FileEntry> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::io(out_dir.join(name), std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    let mut rows = 0;
    for rec in records {
        w.write_record(&rec).map_err(csv_err)?;
        rows += 1;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::io(out_dir.join(name), e.into_error()))?;
    let path = out_dir.join(name);
    fs::write(&path, &bytes).map_err(|e| HarnessError::io(&path, e))?;
    Ok(FileEntry {
        name: name.to_string(),
        rows,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Writes `fact.csv`, `dim1.csv` and `dim2.csv`.
pub fn generate_base(spec: &GenSpec, out_dir: &Path) -> Result<Vec<FileEntry>> {
    spec.validate()?;
    ensure_dir(out_dir)?;
    let fact = write_csv(
        out_dir,
        "fact.csv",
        &FACT_COLUMNS,
        fact_rows(spec).iter().map(fact_record),
    )?;

    let mut rng = SplitMix64::stream(spec.seed, STREAM_DIM1);
    let dim1 = write_csv(
        out_dir,
        "dim1.csv",
        &["d1_key", "d1_name", "d1_category"],
        (1..=spec.dim_rows()).map(|k| {
            let cat = rng.below(CATEGORIES);
            vec![
                k.to_string(),
                format!("item {k}"),
                format!("category_{cat}"),
            ]
        }),
    )?;
    let mut rng = SplitMix64::stream(spec.seed, STREAM_DIM2);
    let dim2 = write_csv(
        out_dir,
        "dim2.csv",
        &["d2_key", "d2_name", "d2_region"],
        (1..=spec.dim_rows()).map(|k| {
            let region = REGIONS[rng.below(REGIONS.len() as u64) as usize];
            vec![k.to_string(), format!("store {k}"), region.to_string()]
        }),
    )?;
    Ok(vec![fact, dim1, dim2])
}

/// Writes `refresh_<i>.csv`. Delete rows carry only the key.
pub fn generate_refresh(spec: &GenSpec, i: u32, out_dir: &Path) -> Result<FileEntry> {
    spec.validate()?;
    let rows = refresh_rows(spec, i)?;
    ensure_dir(out_dir)?;
    write_csv(
        out_dir,
        &format!("refresh_{i}.csv"),
        &REFRESH_COLUMNS,
        rows.iter().map(|(op, r)| {
            let mut rec = vec![op.code().to_string()];
            if *op == RefreshOp::Delete {
                rec.extend([
                    r.key.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]);
            } else {
                rec.extend(fact_record(r));
            }
            rec
        }),
    )
}

/// Base files, every refresh and `manifest.json`.
pub fn generate_all(spec: &GenSpec, out_dir: &Path) -> Result<Manifest> {
    let mut files = generate_base(spec, out_dir)?;
    for i in 1..=spec.refresh_count {
        files.push(generate_refresh(spec, i, out_dir)?);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: spec.clone(),
        files,
    };
    let path = out_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
    Ok(manifest)
}
