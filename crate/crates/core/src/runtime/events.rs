use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gate::GateMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    WindowIn,
    TriggerDecision,
    FmInvoked,
    FogDetected,
    InterventionOn,
    InterventionOff,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::WindowIn,
        EventKind::TriggerDecision,
        EventKind::FmInvoked,
        EventKind::FogDetected,
        EventKind::InterventionOn,
        EventKind::InterventionOff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::WindowIn => "window_in",
            EventKind::TriggerDecision => "trigger_decision",
            EventKind::FmInvoked => "fm_invoked",
            EventKind::FogDetected => "fog_detected",
            EventKind::InterventionOn => "intervention_on",
            EventKind::InterventionOff => "intervention_off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    None,
    Trigger { p_ambulatory: f64, gate: GateMode },
    Fm { p_fog: f64 },
    Command { episode: u64 },
}

/// One log record. `duration_us` and `latency_us` are wall-clock
/// measurements; everything else is a pure function of inputs and models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeEvent {
    pub stream_time_s: f64,
    pub kind: EventKind,
    /// Index of the window that produced the event.
    pub window: u64,
    pub duration_us: f64,
    /// Window-complete to this event, for `window_in` (set once the window's
    /// decision is final) and intervention commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_us: Option<f64>,
    pub payload: Payload,
}

/// The wall-clock-free projection of an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub stream_time_s: f64,
    pub kind: EventKind,
    pub window: u64,
    pub payload: Payload,
}

impl From<&RuntimeEvent> for DecisionRecord {
    fn from(e: &RuntimeEvent) -> Self {
        DecisionRecord {
            stream_time_s: e.stream_time_s,
            kind: e.kind,
            window: e.window,
            payload: e.payload,
        }
    }
}

pub fn write_jsonl<T: Serialize>(records: &[T], mut w: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Stream(e.into()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_event_log(events: &[RuntimeEvent], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_jsonl(events, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_decision_log(events: &[RuntimeEvent], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let recs: Vec<DecisionRecord> = events.iter().map(DecisionRecord::from).collect();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_jsonl(&recs, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_event_log(r: impl BufRead) -> Result<Vec<RuntimeEvent>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_event_log(path: impl AsRef<Path>) -> Result<Vec<RuntimeEvent>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_event_log(std::io::BufReader::new(f))
}

/// Per-window view: window start time and whether the FM ran.
pub fn window_activity(events: &[RuntimeEvent]) -> Vec<(f64, bool)> {
    let mut out: Vec<(u64, f64, bool)> = events
        .iter()
        .filter(|e| e.kind == EventKind::WindowIn)
        .map(|e| (e.window, e.stream_time_s, false))
        .collect();
    out.sort_by_key(|w| w.0);
    for e in events.iter().filter(|e| e.kind == EventKind::FmInvoked) {
        if let Ok(i) = out.binary_search_by_key(&e.window, |w| w.0) {
            out[i].2 = true;
        }
    }
    out.into_iter().map(|(_, t, a)| (t, a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let ev = vec![
            RuntimeEvent {
                stream_time_s: 0.0,
                kind: EventKind::WindowIn,
                window: 0,
                duration_us: 3.5,
                latency_us: Some(120.0),
                payload: Payload::None,
            },
            RuntimeEvent {
                stream_time_s: 0.0,
                kind: EventKind::TriggerDecision,
                window: 0,
                duration_us: 40.0,
                latency_us: None,
                payload: Payload::Trigger {
                    p_ambulatory: 0.75,
                    gate: GateMode::FmActive,
                },
            },
        ];
        let mut buf = Vec::new();
        write_jsonl(&ev, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"kind\":\"trigger_decision\""));
        assert_eq!(read_event_log(&buf[..]).unwrap(), ev);
    }
}
