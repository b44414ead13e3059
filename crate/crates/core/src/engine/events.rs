//! Audit log of protocol actions: one event per request or automatic
//! task, emitted as JSON Lines with stable field order for replay and
//! golden-file comparison.

use serde::Serialize;

use crate::units::Tick;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EngineEvent {
    pub seq: u64,
    pub time: Tick,
    pub kind: &'static str,
    pub payload: serde_json::Value,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok { notes: Vec<String> },
    Rejected { reason: String },
}

impl EngineEvent {
    /// One JSON line, newline terminated.
    pub fn to_json_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("event serializes");
        line.push('\n');
        line
    }
}

/// Destination for emitted events. The null sink skips payload and note
/// construction entirely, which keeps Monte Carlo trials cheap; state
/// transitions and randomness draws are identical either way.
pub enum EventSink {
    Null,
    Memory(Vec<EngineEvent>),
    Writer(Box<dyn std::io::Write + Send>),
}

impl EventSink {
    pub fn enabled(&self) -> bool {
        !matches!(self, EventSink::Null)
    }

    pub fn push(&mut self, event: EngineEvent) {
        match self {
            EventSink::Null => {}
            EventSink::Memory(events) => events.push(event),
            EventSink::Writer(w) => {
                w.write_all(event.to_json_line().as_bytes())
                    .expect("event log write failed");
            }
        }
    }
}

impl std::fmt::Debug for EventSink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EventSink::Null => write!(f, "EventSink::Null"),
            EventSink::Memory(events) => write!(f, "EventSink::Memory({} events)", events.len()),
            EventSink::Writer(_) => write!(f, "EventSink::Writer"),
        }
    }
}
