#![allow(dead_code)]

use std::path::PathBuf;

use lsth_core::datagen::{generate_all, GenSpec};
use lsth_core::executor::{run_experiment, ExperimentConfig, ExperimentResult};
use lsth_core::package::{build_package, refreshes_needed, PackageConfig, PackageId};
use lsth_core::{ConnectionSpec, EventRecord, Library, MemorySink, WorkloadSpec};
use tempfile::TempDir;

pub struct Setup {
    pub dir: TempDir,
    pub library: Library,
    pub data: PathBuf,
    pub store: PathBuf,
}

pub fn setup(rows: u64, seed: u64, refreshes: u32) -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let library = Library::materialize_builtin(&dir.path().join("library")).unwrap();
    let data = dir.path().join("data");
    generate_all(&GenSpec::new(rows, seed).with_refreshes(refreshes), &data).unwrap();
    let store = dir.path().join("store");
    Setup {
        dir,
        library,
        data,
        store,
    }
}

impl Setup {
    pub fn config(&self, lst: &str, mode: &str, target_rows: u64) -> ExperimentConfig {
        ExperimentConfig::new("test", self.library.clone())
            .with_target("default", ConnectionSpec::mini_lst(&self.store))
            .with_global("lst", lst)
            .with_global("write_mode", mode)
            .with_global("target_file_rows", target_rows)
            .with_global("data_dir", self.data.display())
    }

    pub fn run(
        &self,
        spec: &WorkloadSpec,
        cfg: &ExperimentConfig,
    ) -> (ExperimentResult, Vec<EventRecord>) {
        let sink = MemorySink::new();
        let res = run_experiment(spec, cfg, &sink).unwrap().remove(0);
        (res, sink.events())
    }
}

pub struct PackageRun {
    pub setup: Setup,
    pub spec: WorkloadSpec,
    pub result: ExperimentResult,
    pub events: Vec<EventRecord>,
}

pub fn run_package(
    id: PackageId,
    pkg: &PackageConfig,
    lst: &str,
    mode: &str,
    rows: u64,
    target_rows: u64,
) -> PackageRun {
    let setup = setup(rows, 42, refreshes_needed(id, pkg));
    let spec = build_package(id, pkg).unwrap();
    let cfg = setup.config(lst, mode, target_rows);
    let (result, events) = setup.run(&spec, &cfg);
    PackageRun {
        setup,
        spec,
        result,
        events,
    }
}
