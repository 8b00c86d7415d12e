//! Threaded replay of a sensor stream through trigger, gate, FM and
//! dispatch. Stages own their state and pass windows along bounded queues,
//! so a slow consumer blocks ingest instead of buffering without limit.

use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::events::{EventKind, Payload, RuntimeEvent};
use super::gate::{gate, GateConfig, GateState};
use super::intervention::{Command, Dispatcher, InterventionPattern};
use crate::error::{Error, Result};
use crate::imu_data::SensorStream;
use crate::models::{FmFogModel, TriggerModel, AMBULATORY};
use crate::preprocess::{
    activity_label, canonicalize, resample, valid_rows, AxisMap, CanonicalStream, NormKey, NormStats, Window,
    N_CHANNELS, NORM_EPS, TARGET_RATE_HZ, WINDOW_HOP, WINDOW_LEN,
};
use crate::tensor_nn::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub gate: GateConfig,
    pub pattern: InterventionPattern,
    pub queue_depth: usize,
    /// Resample non-100 Hz sources on entry instead of rejecting them.
    pub resample: bool,
    /// Pace ingest at the stream's own clock.
    pub realtime: bool,
    /// Fall back to running statistics when no stored stats match.
    pub online_norm: bool,
    /// Seconds of signal the running statistics accumulate before freezing.
    pub online_warmup_s: f64,
    pub axis_map: AxisMap,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            gate: GateConfig::default(),
            pattern: InterventionPattern::default(),
            queue_depth: 8,
            resample: true,
            realtime: false,
            online_norm: true,
            online_warmup_s: 30.0,
            axis_map: AxisMap::IDENTITY,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.pattern.validate()?;
        if self.queue_depth == 0 {
            return Err(Error::Config("queue_depth must be at least 1".into()));
        }
        if !(self.online_warmup_s > 0.0) {
            return Err(Error::Config("online_warmup_s must be positive".into()));
        }
        Ok(())
    }
}

/// What gets replayed.
#[derive(Debug, Clone)]
pub enum ReplaySource {
    /// A raw stream, windowed live with hop 64.
    Stream(SensorStream),
    /// Already normalized windows, replayed in order.
    Windows(Vec<Window>),
}

/// Source of ambulatory probabilities.
#[derive(Debug, Clone, Copy)]
pub enum TriggerSource<'a, F> {
    Model(&'a TriggerModel<F>),
    /// Ground-truth labels stand in for the classifier.
    Oracle,
}

#[derive(Debug, Clone)]
pub struct StreamRun {
    pub events: Vec<RuntimeEvent>,
    pub windows: usize,
    pub online_norm: bool,
}

enum Ingest {
    Sample { t: f64, row: [f32; N_CHANNELS], valid: bool },
    Window(Window),
}

struct WinMsg<F> {
    index: u64,
    start_s: f64,
    x: Vec<F>,
    loc: usize,
    oracle_ambulatory: bool,
    complete: Instant,
    events: Vec<RuntimeEvent>,
    p_ambulatory: f64,
    fog: Option<bool>,
}

fn event(t: f64, kind: EventKind, window: u64, started: Instant, payload: Payload) -> RuntimeEvent {
    RuntimeEvent {
        stream_time_s: t,
        kind,
        window,
        duration_us: started.elapsed().as_nanos() as f64 / 1000.0,
        latency_us: None,
        payload,
    }
}

enum Normalizer {
    Fixed([(f64, f64); N_CHANNELS]),
    Online {
        n: f64,
        mean: [f64; N_CHANNELS],
        m2: [f64; N_CHANNELS],
        until_s: f64,
    },
    Identity,
}

impl Normalizer {
    fn apply(&mut self, t: f64, row: &mut [f32; N_CHANNELS], present: &[bool; N_CHANNELS]) {
        match self {
            Normalizer::Identity => {}
            Normalizer::Fixed(st) => {
                for c in (0..N_CHANNELS).filter(|&c| present[c]) {
                    row[c] = ((row[c] as f64 - st[c].0) / st[c].1) as f32;
                }
            }
            Normalizer::Online { n, mean, m2, until_s } => {
                if t < *until_s {
                    *n += 1.0;
                    for c in 0..N_CHANNELS {
                        let v = row[c] as f64;
                        let d = v - mean[c];
                        mean[c] += d / *n;
                        m2[c] += d * (v - mean[c]);
                    }
                }
                for c in (0..N_CHANNELS).filter(|&c| present[c]) {
                    let sd = if *n >= 2.0 { (m2[c] / *n).sqrt().max(NORM_EPS) } else { 1.0 };
                    row[c] = ((row[c] as f64 - mean[c]) / sd) as f32;
                }
            }
        }
    }
}

fn fixed_stats(s: &CanonicalStream, stats: &NormStats) -> Option<[(f64, f64); N_CHANNELS]> {
    let mut out = [(0.0, 1.0); N_CHANNELS];
    for c in (0..N_CHANNELS).filter(|&c| s.present_mask[c]) {
        let k = NormKey {
            subject_id: s.subject_id.clone(),
            site: s.location.site,
            side: s.location.side,
            channel: c as u8,
        };
        let st = stats.get(&k)?;
        out[c] = (st.mean, st.std);
    }
    Some(out)
}

fn pace(start: Instant, offset_s: f64) {
    let due = start + Duration::from_secs_f64(offset_s.max(0.0));
    let now = Instant::now();
    if due > now {
        std::thread::sleep(due - now);
    }
}

/// Replays `source` and returns the full event log.
pub fn stream_engine<F: Float>(
    source: &ReplaySource,
    trigger: TriggerSource<'_, F>,
    fm: &FmFogModel<F>,
    norm: Option<&NormStats>,
    cfg: &EngineConfig,
) -> Result<StreamRun> {
    cfg.validate()?;
    let canonical = match source {
        ReplaySource::Stream(s) => {
            if s.native_rate_hz != TARGET_RATE_HZ && !cfg.resample {
                return Err(Error::Config(format!(
                    "stream rate {} Hz needs resampling to {TARGET_RATE_HZ} Hz but resample is disabled",
                    s.native_rate_hz
                )));
            }
            let s = if s.native_rate_hz == TARGET_RATE_HZ { s.clone() } else { resample(s, TARGET_RATE_HZ, cfg.seed)? };
            Some(canonicalize(&s, &cfg.axis_map)?)
        }
        ReplaySource::Windows(_) => None,
    };
    let mut normalizer = match &canonical {
        None => Normalizer::Identity,
        Some(c) => match norm.and_then(|n| fixed_stats(c, n)) {
            Some(st) => Normalizer::Fixed(st),
            None if cfg.online_norm => Normalizer::Online {
                n: 0.0,
                mean: [0.0; N_CHANNELS],
                m2: [0.0; N_CHANNELS],
                until_s: c.timestamps_s.first().copied().unwrap_or(0.0) + cfg.online_warmup_s,
            },
            None => {
                return Err(Error::Key(format!(
                    "no normalization stats for {} {:?} and online fallback disabled",
                    c.subject_id, c.location
                )))
            }
        },
    };
    let online = matches!(normalizer, Normalizer::Online { .. });

    let depth = cfg.queue_depth;
    let (tx_in, rx_in) = sync_channel::<Ingest>(depth);
    let (tx_win, rx_win) = sync_channel::<WinMsg<F>>(depth);
    let (tx_trig, rx_trig) = sync_channel::<WinMsg<F>>(depth);
    let (tx_fm, rx_fm) = sync_channel::<WinMsg<F>>(depth);
    let (tx_out, rx_out) = sync_channel::<Vec<RuntimeEvent>>(depth);
    let canonical = canonical.as_ref();

    std::thread::scope(|scope| {
        let ingest = scope.spawn(move || {
            let start = Instant::now();
            match (source, canonical) {
                (ReplaySource::Stream(_), Some(c)) => {
                    let valid = valid_rows(c);
                    let t0 = c.timestamps_s.first().copied().unwrap_or(0.0);
                    for i in 0..c.len() {
                        let t = c.timestamps_s[i];
                        if cfg.realtime {
                            pace(start, t - t0);
                        }
                        let mut row = [0f32; N_CHANNELS];
                        row.copy_from_slice(c.row(i));
                        normalizer.apply(t, &mut row, &c.present_mask);
                        if tx_in.send(Ingest::Sample { t, row, valid: valid[i] }).is_err() {
                            break;
                        }
                    }
                }
                (ReplaySource::Windows(ws), _) => {
                    let t0 = ws.first().map(|w| w.start_time_s).unwrap_or(0.0);
                    for w in ws {
                        if cfg.realtime {
                            pace(start, w.start_time_s - t0 + WINDOW_LEN as f64 / TARGET_RATE_HZ);
                        }
                        if tx_in.send(Ingest::Window(w.clone())).is_err() {
                            break;
                        }
                    }
                }
                _ => unreachable!("stream sources are canonicalized"),
            }
        });

        let windower = scope.spawn(move || window_stage::<F>(rx_in, tx_win, canonical));
        let trig = scope.spawn(move || trigger_stage(rx_win, tx_trig, trigger));
        let fm_stage = scope.spawn(move || gate_fm_stage(rx_trig, tx_fm, fm, cfg.gate));
        let dispatch = scope.spawn(move || dispatch_stage(rx_fm, tx_out, cfg.pattern));

        let mut events = Vec::new();
        let mut windows = 0;
        for batch in rx_out {
            windows += batch.iter().filter(|e| e.kind == EventKind::WindowIn).count();
            events.extend(batch);
        }
        ingest.join().expect("ingest thread panicked");
        windower.join().expect("window thread panicked");
        trig.join().expect("trigger thread panicked")?;
        fm_stage.join().expect("fm thread panicked")?;
        dispatch.join().expect("dispatch thread panicked");
        Ok(StreamRun {
            events,
            windows,
            online_norm: online,
        })
    })
}

fn window_stage<F: Float>(rx: Receiver<Ingest>, tx: SyncSender<WinMsg<F>>, canonical: Option<&CanonicalStream>) {
    let max_gap = 1.5 / TARGET_RATE_HZ;
    let mut buf: Vec<(f64, [f32; N_CHANNELS])> = Vec::with_capacity(WINDOW_LEN);
    let mut next_index = 0u64;
    // Row index of the first buffered sample in the canonical stream.
    let mut buf_start = 0usize;
    let mut row_index = 0usize;
    for msg in rx {
        let started = Instant::now();
        let win = match msg {
            Ingest::Window(w) => Some((w.start_time_s, w.values.iter().map(|&v| F::of(v as f64)).collect(), w.location_id as usize, w.label.is_ambulatory())),
            Ingest::Sample { t, row, valid } => {
                let i = row_index;
                row_index += 1;
                let breaks = buf.last().is_some_and(|&(tp, _)| t - tp > max_gap);
                if !valid || breaks {
                    buf.clear();
                }
                if !valid {
                    continue;
                }
                if buf.is_empty() {
                    buf_start = i;
                }
                buf.push((t, row));
                if buf.len() < WINDOW_LEN {
                    continue;
                }
                let c = canonical.expect("sample sources carry a canonical stream");
                let x: Vec<F> = buf.iter().flat_map(|(_, r)| r.iter().map(|&v| F::of(v as f64))).collect();
                let amb = activity_label(c, buf_start, WINDOW_LEN).is_some_and(|l| l.is_ambulatory());
                let start_s = buf[0].0;
                buf.drain(..WINDOW_HOP);
                buf_start += WINDOW_HOP;
                Some((start_s, x, c.location.location_id() as usize, amb))
            }
        };
        let Some((start_s, x, loc, amb)) = win else { continue };
        let index = next_index;
        next_index += 1;
        let msg = WinMsg {
            index,
            start_s,
            x,
            loc,
            oracle_ambulatory: amb,
            complete: Instant::now(),
            events: vec![event(start_s, EventKind::WindowIn, index, started, Payload::None)],
            p_ambulatory: 0.0,
            fog: None,
        };
        if tx.send(msg).is_err() {
            break;
        }
    }
}

fn trigger_stage<F: Float>(rx: Receiver<WinMsg<F>>, tx: SyncSender<WinMsg<F>>, trigger: TriggerSource<'_, F>) -> Result<()> {
    for mut m in rx {
        let started = Instant::now();
        m.p_ambulatory = match trigger {
            TriggerSource::Oracle => f64::from(u8::from(m.oracle_ambulatory)),
            TriggerSource::Model(t) => t.predict_proba(&m.x, 1)?[AMBULATORY].as_f64(),
        };
        // The gate verdict is filled in by the next stage.
        m.events.push(event(m.start_s, EventKind::TriggerDecision, m.index, started, Payload::None));
        if tx.send(m).is_err() {
            break;
        }
    }
    Ok(())
}

fn gate_fm_stage<F: Float>(rx: Receiver<WinMsg<F>>, tx: SyncSender<WinMsg<F>>, fm: &FmFogModel<F>, cfg: GateConfig) -> Result<()> {
    let mut state = GateState::default();
    for mut m in rx {
        let started = Instant::now();
        let (next, run) = gate(m.p_ambulatory, state, m.start_s, &cfg);
        state = next;
        let trig = m.events.last_mut().expect("trigger event");
        trig.duration_us += started.elapsed().as_nanos() as f64 / 1000.0;
        trig.payload = Payload::Trigger {
            p_ambulatory: m.p_ambulatory,
            gate: state.mode,
        };
        if run {
            let started = Instant::now();
            let p = fm.predict_proba(&m.x, &[m.loc], 1)?;
            let p_fog = p[1].as_f64();
            m.events.push(event(m.start_s, EventKind::FmInvoked, m.index, started, Payload::Fm { p_fog }));
            let started = Instant::now();
            let fog = p[1] > p[0];
            if fog {
                m.events.push(event(m.start_s, EventKind::FogDetected, m.index, started, Payload::Fm { p_fog }));
            }
            m.fog = Some(fog);
        }
        if tx.send(m).is_err() {
            break;
        }
    }
    Ok(())
}

fn command_event(c: &Command, window: u64, started: Instant, latency: Option<f64>) -> RuntimeEvent {
    let kind = if c.on { EventKind::InterventionOn } else { EventKind::InterventionOff };
    let mut e = event(c.time_s, kind, window, started, Payload::Command { episode: c.episode });
    e.latency_us = latency;
    e
}

fn dispatch_stage<F: Float>(rx: Receiver<WinMsg<F>>, tx: SyncSender<Vec<RuntimeEvent>>, pattern: InterventionPattern) {
    let mut d = Dispatcher::new(pattern);
    let mut last: Option<(u64, f64)> = None;
    for m in rx {
        let started = Instant::now();
        // A dormant gate means no FM verdict, which clears any episode.
        let cmds = d.decide(m.start_s, m.fog.unwrap_or(false));
        let latency = m.complete.elapsed().as_nanos() as f64 / 1000.0;
        let (before, at): (Vec<Command>, Vec<Command>) = cmds.into_iter().partition(|c| c.time_s < m.start_s);
        let mut out: Vec<RuntimeEvent> = before.iter().map(|c| command_event(c, m.index, started, None)).collect();
        let mut evs = m.events;
        evs[0].latency_us = Some(latency);
        out.extend(evs);
        out.extend(at.iter().map(|c| command_event(c, m.index, started, Some(latency))));
        last = Some((m.index, m.start_s));
        if tx.send(out).is_err() {
            return;
        }
    }
    if let Some((index, start)) = last {
        let started = Instant::now();
        let end = start + WINDOW_LEN as f64 / TARGET_RATE_HZ;
        let tail: Vec<RuntimeEvent> = d.finish(end).iter().map(|c| command_event(c, index, started, None)).collect();
        if !tail.is_empty() {
            let _ = tx.send(tail);
        }
    }
}
