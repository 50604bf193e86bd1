//! Built-in workload packages W0 to W4.

use std::fmt;
use std::str::FromStr;

use crate::error::{HarnessError, Result};
use crate::workload::{
    Params, PhaseSpec, PhaseType, SessionSpec, TaskRef, WorkloadSpec, DEFAULT_TARGET,
};

/// Phase parameter naming the Load or Data Maintenance phase whose recorded
/// table version a Time Travel phase queries.
pub const ASOF_SOURCE: &str = "asof_source";

/// Refresh streams consumed by W1.
pub const W1_REFRESHES: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PackageId {
    W0,
    W1,
    W2,
    W3,
    W3Multi,
    W4,
}

impl PackageId {
    pub const ALL: [PackageId; 6] = [
        PackageId::W0,
        PackageId::W1,
        PackageId::W2,
        PackageId::W3,
        PackageId::W3Multi,
        PackageId::W4,
    ];
}

impl fmt::Display for PackageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PackageId::W0 => "W0",
            PackageId::W1 => "W1",
            PackageId::W2 => "W2",
            PackageId::W3 => "W3",
            PackageId::W3Multi => "W3_MULTI",
            PackageId::W4 => "W4",
        })
    }
}

impl FromStr for PackageId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        PackageId::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::Config(format!("unknown package {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageConfig {
    /// Concurrent streams of a Throughput phase.
    pub streams: u32,
    /// Data Maintenance batch count.
    pub k: u32,
    pub target: String,
    pub reader: String,
    pub writer: String,
}

impl Default for PackageConfig {
    fn default() -> Self {
        Self {
            streams: 4,
            k: 3,
            target: DEFAULT_TARGET.to_string(),
            reader: "reader".to_string(),
            writer: "writer".to_string(),
        }
    }
}

/// Number of refresh streams a package consumes.
pub fn refreshes_needed(id: PackageId, cfg: &PackageConfig) -> u32 {
    match id {
        PackageId::W0 => 2,
        PackageId::W1 => W1_REFRESHES,
        PackageId::W2 | PackageId::W3 | PackageId::W3Multi => cfg.k * (cfg.k + 1) / 2,
        PackageId::W4 => cfg.k,
    }
}

struct Builder {
    phases: Vec<PhaseSpec>,
    next_refresh: u32,
}

impl Builder {
    fn phase(
        &mut self,
        id: String,
        phase_type: PhaseType,
        sessions: Vec<SessionSpec>,
    ) -> &mut PhaseSpec {
        self.phases.push(PhaseSpec {
            id,
            phase_type,
            params: Params::new(),
            sessions,
        });
        self.phases.last_mut().expect("just pushed")
    }

    fn dm_tasks(&mut self, n: u32) -> Vec<TaskRef> {
        (0..n)
            .map(|_| {
                self.next_refresh += 1;
                TaskRef::named("data_maintenance").with_param("refresh_idx", self.next_refresh)
            })
            .collect()
    }
}

fn session(target: &str, tasks: Vec<TaskRef>) -> SessionSpec {
    SessionSpec::new(target, tasks)
}

fn su(target: &str) -> SessionSpec {
    session(target, vec![TaskRef::named("single_user")])
}

pub fn build_package(id: PackageId, cfg: &PackageConfig) -> Result<WorkloadSpec> {
    if cfg.streams < 1 || cfg.k < 1 {
        return Err(HarnessError::Config(
            "streams and k must both be >= 1".into(),
        ));
    }
    let mut b = Builder {
        phases: Vec::new(),
        next_refresh: 0,
    };
    let (read, write) = match id {
        PackageId::W3Multi => (cfg.reader.as_str(), cfg.writer.as_str()),
        _ => (cfg.target.as_str(), cfg.target.as_str()),
    };
    b.phase(
        "load".into(),
        PhaseType::Load,
        vec![session(write, vec![TaskRef::named("load")])],
    );
    match id {
        PackageId::W0 => {
            b.phase("su_1".into(), PhaseType::SingleUser, vec![su(read)]);
            for i in 1..=2 {
                let streams = (0..cfg.streams).map(|_| su(read)).collect();
                b.phase(format!("tp_{i}"), PhaseType::Throughput, streams);
                let tasks = b.dm_tasks(1);
                b.phase(
                    format!("dm_{i}"),
                    PhaseType::DataMaintenance,
                    vec![session(write, tasks)],
                );
            }
        }
        PackageId::W1 => {
            for i in 1..=W1_REFRESHES + 1 {
                b.phase(format!("su_{i}"), PhaseType::SingleUser, vec![su(read)]);
                if i <= W1_REFRESHES {
                    let tasks = b.dm_tasks(1);
                    b.phase(
                        format!("dm_{i}"),
                        PhaseType::DataMaintenance,
                        vec![session(write, tasks)],
                    );
                }
            }
        }
        PackageId::W2 => {
            b.phase("su_0".into(), PhaseType::SingleUser, vec![su(read)]);
            for i in 1..=cfg.k {
                let tasks = b.dm_tasks(i);
                b.phase(
                    format!("dm_{i}"),
                    PhaseType::DataMaintenance,
                    vec![session(write, tasks)],
                );
                b.phase(format!("su_{i}a"), PhaseType::SingleUser, vec![su(read)]);
                b.phase(
                    format!("o_{i}"),
                    PhaseType::Optimize,
                    vec![session(write, vec![TaskRef::named("optimize")])],
                );
                b.phase(format!("su_{i}b"), PhaseType::SingleUser, vec![su(read)]);
            }
        }
        PackageId::W3 | PackageId::W3Multi => {
            b.phase("su_0".into(), PhaseType::SingleUser, vec![su(read)]);
            for i in 1..=cfg.k {
                let tasks = b.dm_tasks(i);
                b.phase(
                    format!("dm_{i}"),
                    PhaseType::DataMaintenance,
                    vec![session(write, tasks), su(read)],
                );
                b.phase(
                    format!("o_{i}"),
                    PhaseType::Optimize,
                    vec![session(write, vec![TaskRef::named("optimize")]), su(read)],
                );
            }
        }
        PackageId::W4 => {
            for i in 1..=cfg.k {
                let tasks = b.dm_tasks(1);
                b.phase(
                    format!("dm_{i}"),
                    PhaseType::DataMaintenance,
                    vec![session(write, tasks)],
                );
            }
            for j in 0..=cfg.k {
                let source = if j == 0 {
                    "load".to_string()
                } else {
                    format!("dm_{j}")
                };
                let p = b.phase(
                    format!("tt_{j}"),
                    PhaseType::TimeTravel,
                    vec![session(read, vec![TaskRef::named("time_travel")])],
                );
                p.params.insert(ASOF_SOURCE.into(), source);
            }
        }
    }
    Ok(WorkloadSpec {
        id: id.to_string(),
        params: Params::new(),
        phases: b.phases,
    })
}
