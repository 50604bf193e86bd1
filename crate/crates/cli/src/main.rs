use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lsth_core::connector::ConnectionSpec;
use lsth_core::datagen::{generate_all, GenSpec};
use lsth_core::executor::{run_experiment, ExperimentConfig, FailurePolicy};
use lsth_core::metrics::{emit_report, ExperimentMetrics};
use lsth_core::package::{build_package, PackageConfig, PackageId};
use lsth_core::telemetry::{load, JsonlSink, LoadMode};
use lsth_core::workload::{self, max_concurrency, WorkloadSpec};
use lsth_core::{EventRecord, HarnessError, Library};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "lsth",
    version,
    about = "Benchmark harness for log-structured tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a workload and print its phase plan.
    Validate {
        #[command(flatten)]
        source: WorkloadSource,
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Generate base tables and refresh streams.
    Datagen {
        #[arg(short, long, env = "LSTH_OUTPUT_DIR")]
        out: PathBuf,
        #[arg(long)]
        rows: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        refreshes: u32,
    },
    /// Execute a workload and write telemetry.
    Run(RunArgs),
    /// Compute metrics from one or more run directories.
    Report {
        #[arg(short, long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long, env = "LSTH_OUTPUT_DIR")]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct WorkloadSource {
    /// Workload YAML file.
    #[arg(short = 'w', long)]
    workload: Option<PathBuf>,
    /// Built-in package: W0, W1, W2, W3, W3_MULTI or W4.
    #[arg(long)]
    package: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: WorkloadSource,
    /// Targets YAML file.
    #[arg(short, long)]
    targets: PathBuf,
    #[arg(short, long, env = "LSTH_OUTPUT_DIR")]
    out: PathBuf,
    #[arg(long)]
    library: Option<PathBuf>,
    /// Extra binding, `key=value`. Repeatable.
    #[arg(short = 'p', long = "param", value_parser = parse_kv)]
    params: Vec<(String, String)>,
    #[arg(long)]
    experiment_id: Option<String>,
    #[arg(long)]
    failure_policy: Option<String>,
    #[arg(long, default_value_t = 1)]
    repetitions: u32,
    /// Streams of a Throughput phase (packages only).
    #[arg(long, default_value_t = 4)]
    streams: u32,
    /// Data Maintenance batches (packages only).
    #[arg(long, default_value_t = 3)]
    k: u32,
    /// Rows generated when no `data_dir` is bound.
    #[arg(long, default_value_t = 1000)]
    rows: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s}"))
}

/// Contents of a targets file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetsFile {
    targets: BTreeMap<String, ConnectionSpec>,
    #[serde(default)]
    params: BTreeMap<String, serde_yaml::Value>,
    #[serde(default)]
    failure_policy: Option<FailurePolicy>,
}

fn scalar(v: &serde_yaml::Value) -> Result<String> {
    Ok(match v {
        serde_yaml::Value::String(s) => s.clone(),
        serde_yaml::Value::Number(n) => n.to_string(),
        serde_yaml::Value::Bool(b) => b.to_string(),
        other => bail!("parameter values must be scalars, got {other:?}"),
    })
}

fn load_targets(path: &Path) -> Result<TargetsFile> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut file: TargetsFile = serde_yaml::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for spec in file.targets.values_mut() {
        if let Some(root) = &spec.storage_root {
            if root.is_relative() {
                spec.storage_root = Some(base.join(root));
            }
        }
    }
    Ok(file)
}

fn open_library(explicit: Option<&Path>, scratch: &Path) -> Result<Library> {
    Ok(match explicit {
        Some(dir) => Library::open(dir)?,
        None => Library::materialize_builtin(scratch)?,
    })
}

fn load_source(
    source: &WorkloadSource,
    library: &Library,
    pkg: &PackageConfig,
) -> Result<(WorkloadSpec, Option<PackageId>)> {
    match (&source.workload, &source.package) {
        (Some(path), _) => Ok((workload::load_workload(path, library)?, None)),
        (None, Some(name)) => {
            let id: PackageId = name.parse()?;
            let spec = build_package(id, pkg)?;
            workload::validate(&spec, library)?;
            Ok((spec, Some(id)))
        }
        (None, None) => bail!(HarnessError::Validation(
            "one of -w or --package is required".into()
        )),
    }
}

fn validate(source: &WorkloadSource, library: Option<&Path>) -> Result<()> {
    let scratch = tempfile::tempdir().context("creating a scratch directory")?;
    let library = open_library(library, scratch.path())?;
    let (spec, _) = load_source(source, &library, &PackageConfig::default())?;
    println!(
        "workload {}: {} phases, max concurrency {}",
        spec.id,
        spec.phases.len(),
        max_concurrency(&spec)
    );
    for (i, p) in spec.phases.iter().enumerate() {
        let sessions: Vec<String> = p
            .sessions
            .iter()
            .map(|s| {
                let tasks: Vec<String> = s.tasks.iter().map(|t| t.label()).collect();
                format!("{}[{}]", s.target, tasks.join(","))
            })
            .collect();
        println!(
            "  {:>2}. {} {} {}",
            i + 1,
            p.id,
            p.phase_type,
            sessions.join(" | ")
        );
    }
    Ok(())
}

fn datagen(out: &Path, rows: u64, seed: u64, refreshes: u32) -> Result<()> {
    let manifest = generate_all(&GenSpec::new(rows, seed).with_refreshes(refreshes), out)?;
    for f in &manifest.files {
        println!("{} {} rows {}", f.name, f.rows, f.sha256);
    }
    Ok(())
}

/// Highest `refresh_idx` any task binds.
fn refreshes_referenced(spec: &WorkloadSpec) -> u32 {
    spec.phases
        .iter()
        .flat_map(|p| &p.sessions)
        .flat_map(|s| &s.tasks)
        .filter_map(|t| t.params.get("refresh_idx")?.parse().ok())
        .max()
        .unwrap_or(0)
}

fn run(args: &RunArgs) -> Result<bool> {
    fs::create_dir_all(&args.out).map_err(|e| HarnessError::io(&args.out, e))?;
    let library = open_library(args.library.as_deref(), &args.out.join("library"))?;
    let pkg = PackageConfig {
        streams: args.streams,
        k: args.k,
        ..Default::default()
    };
    let (spec, package) = load_source(&args.source, &library, &pkg)?;
    let targets = load_targets(&args.targets)?;
    let spec_path = args.out.join("workload.yaml");
    fs::write(&spec_path, spec.to_yaml()).map_err(|e| HarnessError::io(&spec_path, e))?;

    let id = args
        .experiment_id
        .clone()
        .or_else(|| package.map(|p| p.to_string()))
        .unwrap_or_else(|| spec.id.clone());
    let mut cfg = ExperimentConfig::new(&id, library);
    cfg.targets = targets.targets;
    cfg.repetitions = args.repetitions;
    for (k, v) in &targets.params {
        cfg.globals.insert(k.clone(), scalar(v)?);
    }
    cfg.globals.extend(args.params.iter().cloned());
    cfg.failure_policy = match &args.failure_policy {
        Some(p) => serde_yaml::from_str(p)
            .map_err(|_| HarnessError::Config(format!("unknown failure policy {p}")))?,
        None => targets.failure_policy.unwrap_or_default(),
    };
    if !cfg.globals.contains_key("data_dir") {
        let data = args.out.join("data");
        generate_all(
            &GenSpec::new(args.rows, args.seed).with_refreshes(refreshes_referenced(&spec)),
            &data,
        )?;
        cfg.globals.insert("data_dir".into(), absolute(&data)?);
    }

    let sink = JsonlSink::create(&args.out)?;
    let results = run_experiment(&spec, &cfg, &sink)?;
    let mut ok = true;
    for r in &results {
        let statements: usize = r.phases.iter().map(|p| p.statements).sum();
        println!(
            "{}: {} phases, {} statements, {} failures{}",
            r.experiment_id,
            r.phases.len(),
            statements,
            r.failures,
            if r.aborted { ", aborted" } else { "" }
        );
        ok &= !r.aborted;
    }
    println!("telemetry written to {}", args.out.display());
    Ok(ok)
}

fn absolute(p: &Path) -> Result<String> {
    let abs = fs::canonicalize(p).map_err(|e| HarnessError::io(p, e))?;
    Ok(abs.display().to_string())
}

fn report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut experiments = Vec::new();
    for dir in inputs {
        let loaded = load(dir, LoadMode::Strict)?;
        let mut groups: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
        for e in loaded.events {
            groups.entry(e.experiment_id.clone()).or_default().push(e);
        }
        if groups.is_empty() {
            let label = dir
                .file_name()
                .map_or("empty".into(), |n| n.to_string_lossy().into_owned());
            groups.insert(label, Vec::new());
        }
        for (label, events) in groups {
            experiments.push(ExperimentMetrics::from_events(&label, &events));
        }
    }
    let files = emit_report(&experiments, out)?;
    println!("{}", files.markdown.display());
    println!("{}", files.csv.display());
    println!("{} plot files", files.plotdata.len());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HarnessError>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Validate { source, library } => validate(source, library.as_deref()).map(|_| true),
        Command::Datagen {
            out,
            rows,
            seed,
            refreshes,
        } => datagen(out, *rows, *seed, *refreshes).map(|_| true),
        Command::Run(args) => run(args),
        Command::Report { inputs, out } => report(inputs, out).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: experiment aborted after a statement failure");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_parsing() {
        assert_eq!(
            parse_kv("lst = hudi").unwrap(),
            ("lst".into(), "hudi".into())
        );
        assert_eq!(parse_kv("a=b=c").unwrap(), ("a".into(), "b=c".into()));
        assert!(parse_kv("novalue").is_err());
    }

    #[test]
    fn targets_resolve_relative_roots() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.yaml");
        fs::write(
            &path,
            "targets:\n  a: {kind: MINI_LST, storage_root: s}\n  b: {kind: DRY_RUN, storage_root: /abs}\nparams: {target_file_rows: 50}\n",
        )
        .unwrap();
        let t = load_targets(&path).unwrap();
        assert_eq!(
            t.targets["a"].storage_root.as_deref(),
            Some(dir.path().join("s").as_path())
        );
        assert_eq!(
            t.targets["b"].storage_root.as_deref(),
            Some(Path::new("/abs"))
        );
        assert_eq!(scalar(&t.params["target_file_rows"]).unwrap(), "50");
    }

    #[test]
    fn refresh_count_from_workload() {
        let spec = build_package(PackageId::W1, &PackageConfig::default()).unwrap();
        assert_eq!(refreshes_referenced(&spec), 5);
    }
}
