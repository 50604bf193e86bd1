//! Counted file-system access.
//!
//! Every physical read, write and directory listing the engine performs goes
//! through [`Io`], which charges the operation both to the statement-local
//! [`StorageCounters`] and to the owning engine's cumulative counters. This is
//! what makes per-statement attribution exact: the sum of statement deltas
//! equals the engine-wide delta over the same window.

use std::fs;
use std::io::ErrorKind;
use std::ops::{Add, AddAssign, Sub};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// File-operation and byte counters standing in for cloud storage API calls
/// and I/O volume.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageCounters {
    pub files_opened: u64,
    pub files_written: u64,
    pub list_calls: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

impl Add for StorageCounters {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for StorageCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.files_opened += rhs.files_opened;
        self.files_written += rhs.files_written;
        self.list_calls += rhs.list_calls;
        self.bytes_read += rhs.bytes_read;
        self.bytes_written += rhs.bytes_written;
    }
}

impl Sub for StorageCounters {
    type Output = Self;
    /// Saturating difference, for deltas between cumulative samples.
    fn sub(self, rhs: Self) -> Self {
        Self {
            files_opened: self.files_opened.saturating_sub(rhs.files_opened),
            files_written: self.files_written.saturating_sub(rhs.files_written),
            list_calls: self.list_calls.saturating_sub(rhs.list_calls),
            bytes_read: self.bytes_read.saturating_sub(rhs.bytes_read),
            bytes_written: self.bytes_written.saturating_sub(rhs.bytes_written),
        }
    }
}

impl std::iter::Sum for StorageCounters {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

#[derive(Debug, Default)]
pub(crate) struct AtomicCounters {
    files_opened: AtomicU64,
    files_written: AtomicU64,
    list_calls: AtomicU64,
    bytes_read: AtomicU64,
    bytes_written: AtomicU64,
}

impl AtomicCounters {
    pub(crate) fn snapshot(&self) -> StorageCounters {
        StorageCounters {
            files_opened: self.files_opened.load(Ordering::SeqCst),
            files_written: self.files_written.load(Ordering::SeqCst),
            list_calls: self.list_calls.load(Ordering::SeqCst),
            bytes_read: self.bytes_read.load(Ordering::SeqCst),
            bytes_written: self.bytes_written.load(Ordering::SeqCst),
        }
    }
}

/// Which class of file a read touched; used for scan diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FileClass {
    Metadata,
    Data,
    Delta,
}

/// Per-class open counts, a finer view than [`StorageCounters::files_opened`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpenBreakdown {
    pub metadata: u64,
    pub data: u64,
    pub delta: u64,
}

impl Add for OpenBreakdown {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            metadata: self.metadata + o.metadata,
            data: self.data + o.data,
            delta: self.delta + o.delta,
        }
    }
}

impl AddAssign for OpenBreakdown {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

pub(crate) struct Io<'a> {
    local: StorageCounters,
    opens: OpenBreakdown,
    global: &'a AtomicCounters,
}

impl<'a> Io<'a> {
    pub(crate) fn new(global: &'a AtomicCounters) -> Self {
        Self {
            local: StorageCounters::default(),
            opens: OpenBreakdown::default(),
            global,
        }
    }

    pub(crate) fn counters(&self) -> StorageCounters {
        self.local
    }

    pub(crate) fn opens(&self) -> OpenBreakdown {
        self.opens
    }

    fn charge_read(&mut self, class: FileClass, bytes: u64) {
        self.local.files_opened += 1;
        self.local.bytes_read += bytes;
        self.global.files_opened.fetch_add(1, Ordering::SeqCst);
        self.global.bytes_read.fetch_add(bytes, Ordering::SeqCst);
        match class {
            FileClass::Metadata => self.opens.metadata += 1,
            FileClass::Data => self.opens.data += 1,
            FileClass::Delta => self.opens.delta += 1,
        }
    }

    fn charge_write(&mut self, bytes: u64) {
        self.local.files_written += 1;
        self.local.bytes_written += bytes;
        self.global.files_written.fetch_add(1, Ordering::SeqCst);
        self.global.bytes_written.fetch_add(bytes, Ordering::SeqCst);
    }

    pub(crate) fn read(&mut self, path: &Path, class: FileClass) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| EngineError::io(path, e))?;
        self.charge_read(class, bytes.len() as u64);
        Ok(bytes)
    }

    /// Reads a file if present; a missing file costs nothing.
    pub(crate) fn read_opt(&mut self, path: &Path, class: FileClass) -> Result<Option<Vec<u8>>> {
        match fs::read(path) {
            Ok(bytes) => {
                self.charge_read(class, bytes.len() as u64);
                Ok(Some(bytes))
            }
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(EngineError::io(path, e)),
        }
    }

    /// Writes a fresh, never-before-used file name.
    pub(crate) fn write_new(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        fs::write(path, bytes).map_err(|e| EngineError::io(path, e))?;
        self.charge_write(bytes.len() as u64);
        Ok(())
    }

    /// Atomically replaces `path` via a temporary file and rename.
    pub(crate) fn write_replace(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = tmp_sibling(path);
        fs::write(&tmp, bytes).map_err(|e| EngineError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| EngineError::io(path, e))?;
        self.charge_write(bytes.len() as u64);
        Ok(())
    }

    /// Atomic create-if-absent: the complete file becomes visible under `path`
    /// only if no file of that name exists. Returns `false` on collision.
    pub(crate) fn publish_if_absent(&mut self, path: &Path, bytes: &[u8]) -> Result<bool> {
        let tmp = tmp_sibling(path);
        fs::write(&tmp, bytes).map_err(|e| EngineError::io(&tmp, e))?;
        let linked = fs::hard_link(&tmp, path);
        let _ = fs::remove_file(&tmp);
        match linked {
            Ok(()) => {
                self.charge_write(bytes.len() as u64);
                Ok(true)
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Ok(false),
            Err(e) => Err(EngineError::io(path, e)),
        }
    }

    pub(crate) fn list(&mut self, dir: &Path) -> Result<Vec<String>> {
        self.local.list_calls += 1;
        self.global.list_calls.fetch_add(1, Ordering::SeqCst);
        let entries = match fs::read_dir(dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(EngineError::io(dir, e)),
        };
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| EngineError::io(dir, e))?;
            if let Some(name) = entry.file_name().to_str() {
                if !name.starts_with(".tmp-") {
                    names.push(name.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    pub(crate) fn delete(&mut self, path: &Path) -> Result<bool> {
        match fs::remove_file(path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(false),
            Err(e) => Err(EngineError::io(path, e)),
        }
    }
}

fn tmp_sibling(path: &Path) -> std::path::PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    path.with_file_name(format!(".tmp-{}-{}", uuid::Uuid::new_v4().simple(), name))
}
