use std::sync::Arc;
use std::thread;

use chrono::Utc;
use lsth_core::telemetry::{load, JsonlSink, LoadMode, SCHEMA_VERSION};
use lsth_core::{EventRecord, PhaseType, Status, TelemetrySink};

fn record(session: usize, seq: usize) -> EventRecord {
    EventRecord {
        v: SCHEMA_VERSION,
        experiment_id: "stress".into(),
        phase_id: "tp".into(),
        phase_type: PhaseType::Throughput,
        session_idx: session,
        task_idx: 0,
        task_name: "single_user".into(),
        statement_idx: seq,
        status: Status::Success,
        wall_start: Utc::now(),
        duration_ns: seq as i64,
        counters: Default::default(),
        error_text: None,
    }
}

#[test]
fn concurrent_appends_keep_per_session_order() {
    const PER: usize = 500;
    let dir = tempfile::tempdir().unwrap();
    let sink = Arc::new(JsonlSink::create(dir.path()).unwrap());
    let handles: Vec<_> = (0..4)
        .map(|s| {
            let sink = Arc::clone(&sink);
            thread::spawn(move || {
                for i in 0..PER {
                    sink.append_event(&record(s, i)).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let loaded = load(dir.path(), LoadMode::Strict).unwrap();
    assert_eq!(loaded.events.len(), 4 * PER);
    for s in 0..4 {
        let seq: Vec<usize> = loaded
            .events
            .iter()
            .filter(|e| e.session_idx == s)
            .map(|e| e.statement_idx)
            .collect();
        assert_eq!(seq, (0..PER).collect::<Vec<_>>());
    }
}
