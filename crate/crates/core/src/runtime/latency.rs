use std::collections::BTreeMap;

use serde::Serialize;

use super::events::{EventKind, RuntimeEvent};
use crate::error::{Error, Result};

/// Order statistics in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl StageStats {
    /// Nearest-rank percentiles over microsecond samples.
    pub fn from_us(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut v: Vec<f64> = samples.iter().map(|us| us / 1000.0).collect();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(StageStats {
            count: v.len(),
            mean_ms: v.iter().sum::<f64>() / v.len() as f64,
            p50_ms: rank(0.5),
            p95_ms: rank(0.95),
            max_ms: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub stages: BTreeMap<String, StageStats>,
    /// Window complete to final gate/FM decision.
    pub window_to_decision: Option<StageStats>,
    /// Window complete to an intervention command.
    pub window_to_intervention: Option<StageStats>,
}

pub fn latency_report(events: &[RuntimeEvent]) -> Result<LatencyReport> {
    if events.is_empty() {
        return Err(Error::Config("latency report needs a non-empty event log".into()));
    }
    let mut stages = BTreeMap::new();
    for kind in EventKind::ALL {
        let d: Vec<f64> = events.iter().filter(|e| e.kind == kind).map(|e| e.duration_us).collect();
        if let Some(s) = StageStats::from_us(&d) {
            stages.insert(kind.name().to_string(), s);
        }
    }
    let lat = |f: &dyn Fn(EventKind) -> bool| {
        let v: Vec<f64> = events.iter().filter(|e| f(e.kind)).filter_map(|e| e.latency_us).collect();
        StageStats::from_us(&v)
    };
    Ok(LatencyReport {
        stages,
        window_to_decision: lat(&|k| k == EventKind::WindowIn),
        window_to_intervention: lat(&|k| matches!(k, EventKind::InterventionOn | EventKind::InterventionOff)),
    })
}

impl LatencyReport {
    pub fn summary_table(&self) -> String {
        let mut s = format!("{:<22} {:>7} {:>10} {:>10} {:>10} {:>10}\n", "stage", "count", "mean ms", "p50 ms", "p95 ms", "max ms");
        let mut row = |name: &str, st: &StageStats| {
            s.push_str(&format!(
                "{:<22} {:>7} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                name, st.count, st.mean_ms, st.p50_ms, st.p95_ms, st.max_ms
            ));
        };
        for kind in EventKind::ALL {
            if let Some(st) = self.stages.get(kind.name()) {
                row(kind.name(), st);
            }
        }
        if let Some(st) = &self.window_to_decision {
            row("window->decision", st);
        }
        if let Some(st) = &self.window_to_intervention {
            row("window->intervention", st);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::events::Payload;

    #[test]
    fn single_sample() {
        let s = StageStats::from_us(&[1500.0]).unwrap();
        assert_eq!((s.mean_ms, s.p50_ms, s.max_ms), (1.5, 1.5, 1.5));
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64 * 1000.0).collect();
        let s = StageStats::from_us(&v).unwrap();
        assert_eq!(s.p50_ms, 50.0);
        assert_eq!(s.p95_ms, 95.0);
        assert_eq!(s.max_ms, 100.0);
    }

    #[test]
    fn empty_log_rejected() {
        assert!(matches!(latency_report(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn stages_grouped_by_kind() {
        let ev = |kind, d| RuntimeEvent {
            stream_time_s: 0.0,
            kind,
            window: 0,
            duration_us: d,
            latency_us: None,
            payload: Payload::None,
        };
        let r = latency_report(&[ev(EventKind::WindowIn, 10.0), ev(EventKind::TriggerDecision, 30.0)]).unwrap();
        assert_eq!(r.stages.len(), 2);
        assert_eq!(r.stages["trigger_decision"].mean_ms, 0.03);
    }
}
