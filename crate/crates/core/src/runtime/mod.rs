//! Event-triggered two-stage streaming runtime.

mod engine;
mod events;
mod gate;
mod intervention;
mod latency;

pub use engine::{stream_engine, EngineConfig, ReplaySource, StreamRun, TriggerSource};
pub use events::{
    load_event_log, read_event_log, save_decision_log, save_event_log, window_activity, write_jsonl, DecisionRecord,
    EventKind, Payload, RuntimeEvent,
};
pub use gate::{gate, GateConfig, GateMode, GateState};
pub use intervention::{intervention_dispatch, Command, Dispatcher, InterventionPattern};
pub use latency::{latency_report, LatencyReport, StageStats};
