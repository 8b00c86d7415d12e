//! The 2-1 vibration cueing cycle. Commands are records only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionPattern {
    pub active_s: f64,
    pub rest_s: f64,
    /// Keep cycling until the freeze clears; otherwise one pulse per episode.
    pub repeat_until_cleared: bool,
}

impl Default for InterventionPattern {
    fn default() -> Self {
        InterventionPattern {
            active_s: 2.0,
            rest_s: 1.0,
            repeat_until_cleared: true,
        }
    }
}

impl InterventionPattern {
    pub fn validate(&self) -> Result<()> {
        if !(self.active_s > 0.0 && self.rest_s > 0.0) {
            return Err(Error::Config(format!(
                "intervention pattern needs positive phases, got {}/{}",
                self.active_s, self.rest_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub time_s: f64,
    pub on: bool,
    pub episode: u64,
}

#[derive(Debug, Clone, Copy)]
struct Episode {
    id: u64,
    next_s: f64,
    /// Whether the next pending command switches the motor on.
    next_on: bool,
}

/// Incremental dispatcher fed with FM decisions in stream-time order.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    pattern: InterventionPattern,
    episode: Option<Episode>,
    episodes: u64,
}

impl Dispatcher {
    pub fn new(pattern: InterventionPattern) -> Self {
        Dispatcher {
            pattern,
            episode: None,
            episodes: 0,
        }
    }

    pub fn in_episode(&self) -> bool {
        self.episode.is_some()
    }

    fn advance(&mut self, until: f64, inclusive: bool, out: &mut Vec<Command>) {
        let p = self.pattern;
        while let Some(ep) = self.episode.as_mut() {
            let due = if inclusive { ep.next_s <= until } else { ep.next_s < until };
            if !due {
                break;
            }
            out.push(Command {
                time_s: ep.next_s,
                on: ep.next_on,
                episode: ep.id,
            });
            if ep.next_on {
                ep.next_s += p.active_s;
            } else if p.repeat_until_cleared {
                ep.next_s += p.rest_s;
            } else {
                ep.next_s = f64::INFINITY;
            }
            ep.next_on = !ep.next_on;
        }
    }

    /// Commands due up to and including a decision at `t`. A positive
    /// decision starts or extends the episode; a negative one clears it,
    /// switching off only if the motor is currently on.
    pub fn decide(&mut self, t: f64, fog: bool) -> Vec<Command> {
        let mut out = Vec::new();
        self.advance(t, false, &mut out);
        match (self.episode, fog) {
            (None, true) => {
                self.episodes += 1;
                out.push(Command {
                    time_s: t,
                    on: true,
                    episode: self.episodes,
                });
                self.episode = Some(Episode {
                    id: self.episodes,
                    next_s: t + self.pattern.active_s,
                    next_on: false,
                });
            }
            (Some(_), true) => self.advance(t, true, &mut out),
            (Some(ep), false) => {
                if !ep.next_on {
                    out.push(Command {
                        time_s: t,
                        on: false,
                        episode: ep.id,
                    });
                }
                self.episode = None;
            }
            (None, false) => {}
        }
        out
    }

    /// Flushes the pattern up to `end` and ends any running episode.
    pub fn finish(&mut self, end: f64) -> Vec<Command> {
        let mut out = Vec::new();
        self.advance(end, true, &mut out);
        if let Some(ep) = self.episode.take() {
            if !ep.next_on {
                out.push(Command {
                    time_s: end,
                    on: false,
                    episode: ep.id,
                });
            }
        }
        out
    }
}

/// Runs the dispatcher over `(time, fog)` decisions. A trailing episode is
/// left open.
pub fn intervention_dispatch(decisions: &[(f64, bool)], pattern: &InterventionPattern) -> Vec<Command> {
    let mut d = Dispatcher::new(*pattern);
    decisions.iter().flat_map(|&(t, fog)| d.decide(t, fog)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times(cmds: &[Command]) -> Vec<(f64, bool)> {
        cmds.iter().map(|c| (c.time_s, c.on)).collect()
    }

    #[test]
    fn five_seconds_of_fog() {
        let mut dec: Vec<(f64, bool)> = (0..5).map(|t| (t as f64, true)).collect();
        dec.push((5.0, false));
        let c = intervention_dispatch(&dec, &InterventionPattern::default());
        assert_eq!(times(&c), vec![(0.0, true), (2.0, false), (3.0, true), (5.0, false)]);
        assert!(c.iter().all(|c| c.episode == 1));
    }

    #[test]
    fn clearing_in_rest_sends_nothing_more() {
        let c = intervention_dispatch(&[(0.0, true), (1.0, true), (2.5, false), (4.0, false)], &InterventionPattern::default());
        assert_eq!(times(&c), vec![(0.0, true), (2.0, false)]);
    }

    #[test]
    fn adjacent_windows_extend() {
        let c = intervention_dispatch(&[(0.0, true), (0.64, true)], &InterventionPattern::default());
        assert_eq!(times(&c), vec![(0.0, true)]);
    }

    #[test]
    fn clearing_while_on_switches_off() {
        let c = intervention_dispatch(&[(0.0, true), (1.28, false)], &InterventionPattern::default());
        assert_eq!(times(&c), vec![(0.0, true), (1.28, false)]);
    }

    #[test]
    fn single_pulse_mode() {
        let p = InterventionPattern {
            repeat_until_cleared: false,
            ..Default::default()
        };
        let dec: Vec<(f64, bool)> = (0..10).map(|t| (t as f64, true)).collect();
        assert_eq!(times(&intervention_dispatch(&dec, &p)), vec![(0.0, true), (2.0, false)]);
    }

    #[test]
    fn new_episode_after_clear() {
        let c = intervention_dispatch(&[(0.0, true), (3.0, false), (4.0, true)], &InterventionPattern::default());
        assert_eq!(times(&c), vec![(0.0, true), (2.0, false), (4.0, true)]);
        assert_eq!(c[2].episode, 2);
    }

    #[test]
    fn finish_closes_open_episode() {
        let mut d = Dispatcher::new(InterventionPattern::default());
        d.decide(0.0, true);
        assert_eq!(times(&d.finish(1.0)), vec![(1.0, false)]);
        assert!(!d.in_episode());
    }
}
