//! Benchmark harness for log-structured tables: workload model, task
//! library, executor, connectors, data generator, telemetry and metrics.

mod builtin;
pub mod connector;
pub mod datagen;
pub mod error;
pub mod executor;
pub mod library;
pub mod metrics;
pub mod package;
pub mod prng;
pub mod telemetry;
pub mod workload;

pub use connector::{Connection, ConnectionSpec, ConnectorKind, StatementResult};
pub use error::{HarnessError, Result};
pub use executor::{run_experiment, ExperimentConfig, ExperimentResult, FailurePolicy};
pub use library::{DialectKey, Library, LstKey, StatementTemplate, TaskTemplate};
pub use metrics::{degradation_rate, Direction, MetricSeries, PhaseAggregate};
pub use package::{build_package, PackageConfig, PackageId};
pub use telemetry::{CounterSample, EventRecord, JsonlSink, MemorySink, Status, TelemetrySink};
pub use workload::{PhaseType, WorkloadSpec};
