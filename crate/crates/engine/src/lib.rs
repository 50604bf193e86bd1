//! A file-backed table engine with three interchangeable metadata layouts,
//! optimistic concurrency over a shared storage root, and counted I/O.

mod engine;
pub mod error;
mod layout;
pub mod log;
pub mod predicate;
pub mod source;
pub mod sql;
pub mod storage;
pub mod table;
pub mod value;

pub use engine::{Engine, Outcome, PendingCommit, ScanResult, DEFAULT_COMMIT_RETRIES};
pub use error::{EngineError, Result};
pub use layout::iceberg::manifest_count as iceberg_manifest_count;
pub use log::{Action, CommitEntry, CommitKind, Snapshot};
pub use predicate::{CmpOp, Comparison, Predicate};
pub use sql::QueryOutput;
pub use storage::{OpenBreakdown, StorageCounters};
pub use table::{DataFile, DeltaFile, Layout, TableDescriptor, WriteMode};
pub use value::{Column, ColumnType, Row, Schema, Value};
