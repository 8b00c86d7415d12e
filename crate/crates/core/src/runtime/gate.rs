use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    FmActive,
    FmDormant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Ambulatory probability at or above which the gate opens.
    pub threshold: f64,
    /// Consecutive sedentary windows needed to close; 0 and 1 both close
    /// on the first one.
    pub debounce_windows: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            threshold: 0.5,
            debounce_windows: 2,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("gate threshold {} not in [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateState {
    pub mode: GateMode,
    /// Consecutive sedentary decisions seen while active.
    pub sedentary_run: usize,
    pub last_opened_s: Option<f64>,
    pub last_closed_s: Option<f64>,
}

impl Default for GateState {
    fn default() -> Self {
        GateState {
            mode: GateMode::FmDormant,
            sedentary_run: 0,
            last_opened_s: None,
            last_closed_s: None,
        }
    }
}

impl GateState {
    pub fn is_open(&self) -> bool {
        self.mode == GateMode::FmActive
    }
}

/// One gate step at window start `t`. Returns the next state and whether the
/// FM runs on this window.
pub fn gate(p_ambulatory: f64, state: GateState, t: f64, cfg: &GateConfig) -> (GateState, bool) {
    let mut next = state;
    if p_ambulatory >= cfg.threshold {
        next.sedentary_run = 0;
        if state.mode == GateMode::FmDormant {
            next.mode = GateMode::FmActive;
            next.last_opened_s = Some(t);
        }
    } else if state.mode == GateMode::FmActive {
        next.sedentary_run += 1;
        if next.sedentary_run >= cfg.debounce_windows.max(1) {
            next.mode = GateMode::FmDormant;
            next.sedentary_run = 0;
            next.last_closed_s = Some(t);
        }
    }
    (next, next.is_open())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opens_immediately() {
        let (s, run) = gate(0.9, GateState::default(), 0.0, &GateConfig::default());
        assert!(run);
        assert_eq!(s.mode, GateMode::FmActive);
        assert_eq!(s.last_opened_s, Some(0.0));
    }

    #[test]
    fn tie_opens() {
        assert!(gate(0.5, GateState::default(), 0.0, &GateConfig::default()).1);
        assert!(!gate(0.4999, GateState::default(), 0.0, &GateConfig::default()).1);
    }

    #[test]
    fn debounce_two() {
        let cfg = GateConfig::default();
        let (s, _) = gate(0.9, GateState::default(), 0.0, &cfg);
        let (s, run) = gate(0.1, s, 0.64, &cfg);
        assert!(run);
        assert_eq!(s.mode, GateMode::FmActive);
        let (s, run) = gate(0.1, s, 1.28, &cfg);
        assert!(!run);
        assert_eq!(s.mode, GateMode::FmDormant);
        assert_eq!(s.last_closed_s, Some(1.28));
    }

    #[test]
    fn interrupted_sedentary_run_resets() {
        let cfg = GateConfig::default();
        let mut s = gate(0.9, GateState::default(), 0.0, &cfg).0;
        for p in [0.1, 0.9, 0.1] {
            s = gate(p, s, 0.0, &cfg).0;
        }
        assert_eq!(s.mode, GateMode::FmActive);
    }

    #[test]
    fn zero_debounce_is_literal() {
        let cfg = GateConfig {
            debounce_windows: 0,
            ..Default::default()
        };
        let s = gate(0.9, GateState::default(), 0.0, &cfg).0;
        assert!(!gate(0.1, s, 0.64, &cfg).1);
    }
}
