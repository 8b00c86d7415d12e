use serde::{Deserialize, Serialize};

use super::canonical::{CanonicalStream, N_CHANNELS};
use super::norm::valid_rows;
use crate::error::{Error, Result};
use crate::imu_data::{activity, SpanLabel};

pub const WINDOW_LEN: usize = 128;
pub const WINDOW_HOP: usize = 64;
/// First sample of the labeled tail: ⌈0.7 · 128⌉.
pub const FOG_TAIL_START: usize = 90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowLabel {
    NonFog,
    Fog,
    Activity(u8),
}

impl WindowLabel {
    /// Class index for the FoG detector: 1 = fog.
    pub fn fog_class(&self) -> usize {
        usize::from(*self == WindowLabel::Fog)
    }

    pub fn is_ambulatory(&self) -> bool {
        match self {
            WindowLabel::Activity(id) => !activity::is_sedentary(*id),
            _ => true,
        }
    }

    /// Class index for the trigger: 0 = ambulatory, 1 = sedentary.
    pub fn trigger_class(&self) -> usize {
        usize::from(!self.is_ambulatory())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Row-major `[128 × 9]`.
    pub values: Vec<f32>,
    pub label: WindowLabel,
    pub location_id: u8,
    pub subject_id: String,
    pub start_time_s: f64,
    pub present_mask: [bool; N_CHANNELS],
}

impl Window {
    pub fn rows(&self) -> usize {
        self.values.len() / N_CHANNELS
    }

    /// Presence inferred from all-zero columns, for windows read back from disk.
    pub fn infer_present_mask(values: &[f32]) -> [bool; N_CHANNELS] {
        let mut mask = [false; N_CHANNELS];
        for (c, m) in mask.iter_mut().enumerate() {
            *m = values[c..].iter().step_by(N_CHANNELS).any(|&v| v != 0.0);
        }
        mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Fog iff a fog span touches samples 90..=127 of the window.
    #[default]
    FogTail,
    /// Most frequent span label over the window's samples.
    ActivityMajority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub len: usize,
    pub overlap: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { len: WINDOW_LEN, overlap: 0.5 }
    }
}

impl WindowConfig {
    pub fn hop(&self) -> Result<usize> {
        let hop = self.len as f64 * (1.0 - self.overlap);
        if self.len == 0 || !(0.0..1.0).contains(&self.overlap) || hop.fract() != 0.0 || hop < 1.0 {
            return Err(Error::Config(format!(
                "window len {} with overlap {} gives non-integer hop",
                self.len, self.overlap
            )));
        }
        Ok(hop as usize)
    }

    pub fn tail_start(&self) -> usize {
        (7 * self.len).div_ceil(10)
    }
}

/// Maximal runs `[a, b)` of valid rows on a gap-free clock.
pub fn valid_segments(stream: &CanonicalStream) -> Vec<(usize, usize)> {
    let valid = valid_rows(stream);
    let max_gap = 1.5 / stream.rate_hz;
    let mut segs = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..stream.len() {
        let joins = i > 0 && stream.timestamps_s[i] - stream.timestamps_s[i - 1] <= max_gap;
        match (start, valid[i]) {
            (Some(a), true) if !joins => {
                segs.push((a, i));
                start = Some(i);
            }
            (None, true) => start = Some(i),
            (Some(a), false) => {
                segs.push((a, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        segs.push((a, stream.len()));
    }
    segs
}

fn label_window(stream: &CanonicalStream, a: usize, len: usize, tail: usize, rule: LabelRule) -> Option<WindowLabel> {
    let dt = 1.0 / stream.rate_hz;
    let ts = &stream.timestamps_s;
    match rule {
        LabelRule::FogTail => {
            let (lo, hi) = (ts[a + tail], ts[a + len - 1] + dt);
            let fog = stream
                .annotations
                .iter()
                .any(|s| s.label == SpanLabel::Fog && s.overlaps(lo, hi));
            Some(if fog { WindowLabel::Fog } else { WindowLabel::NonFog })
        }
        LabelRule::ActivityMajority => {
            let mut counts: Vec<(SpanLabel, usize)> = Vec::new();
            let mut uncovered = 0;
            for &t in &ts[a..a + len] {
                match stream.annotations.iter().find(|s| s.contains(t)) {
                    Some(s) => match counts.iter_mut().find(|(l, _)| *l == s.label) {
                        Some((_, n)) => *n += 1,
                        None => counts.push((s.label, 1)),
                    },
                    None => uncovered += 1,
                }
            }
            let (label, n) = counts.into_iter().max_by_key(|&(_, n)| n)?;
            if n <= uncovered {
                return None;
            }
            match label {
                SpanLabel::Fog => Some(WindowLabel::Fog),
                SpanLabel::NonFog => Some(WindowLabel::NonFog),
                SpanLabel::Activity(id) => Some(WindowLabel::Activity(id)),
                SpanLabel::Invalid => None,
            }
        }
    }
}

/// Majority activity label of rows `[start, start + len)`, or `None` when
/// most rows are unannotated or invalid.
pub fn activity_label(stream: &CanonicalStream, start: usize, len: usize) -> Option<WindowLabel> {
    if start + len > stream.len() || len == 0 {
        return None;
    }
    label_window(stream, start, len, 0, LabelRule::ActivityMajority)
}

/// Cuts fixed-length windows with a fixed hop. The window grid restarts at
/// the beginning of every valid, gap-free segment, so no window touches an
/// invalid region and each segment of `T` rows yields ⌊(T−len)/hop⌋+1.
pub fn windowize(stream: &CanonicalStream, cfg: &WindowConfig, rule: LabelRule) -> Result<Vec<Window>> {
    let hop = cfg.hop()?;
    let len = cfg.len;
    let tail = cfg.tail_start();
    let loc = stream.location.location_id();
    let mut out = Vec::new();
    for (a, b) in valid_segments(stream) {
        let mut s = a;
        while s + len <= b {
            if let Some(label) = label_window(stream, s, len, tail, rule) {
                out.push(Window {
                    values: stream.channels[s * N_CHANNELS..(s + len) * N_CHANNELS].to_vec(),
                    label,
                    location_id: loc,
                    subject_id: stream.subject_id.clone(),
                    start_time_s: stream.timestamps_s[s],
                    present_mask: stream.present_mask,
                });
            }
            s += hop;
        }
    }
    Ok(out)
}

pub fn expected_window_count(rows: usize, len: usize, hop: usize) -> usize {
    if rows < len {
        0
    } else {
        (rows - len) / hop + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu_data::{AnnotationSpan, SensorLocation, SensorSite, Side};
    use crate::preprocess::canonical::present_mask_for;

    fn canon(n: usize, spans: Vec<AnnotationSpan>) -> CanonicalStream {
        CanonicalStream {
            subject_id: "s".into(),
            location: SensorLocation::new(SensorSite::Ankle, Side::Unknown),
            rate_hz: 100.0,
            timestamps_s: (0..n).map(|i| i as f64 / 100.0).collect(),
            channels: (0..n * N_CHANNELS).map(|v| v as f32).collect(),
            present_mask: present_mask_for([true, true, true]),
            annotations: spans,
        }
    }

    fn span(label: SpanLabel, a: usize, b: usize) -> AnnotationSpan {
        AnnotationSpan::new(label, a as f64 / 100.0, b as f64 / 100.0).unwrap()
    }

    #[test]
    fn counts_and_starts() {
        let w = windowize(&canon(256, vec![]), &WindowConfig::default(), LabelRule::FogTail).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.iter().map(|w| w.start_time_s).collect::<Vec<_>>(), vec![0.0, 0.64, 1.28]);
        assert!(windowize(&canon(100, vec![]), &WindowConfig::default(), LabelRule::FogTail)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn fog_only_counts_in_the_tail() {
        let cfg = WindowConfig::default();
        let early = windowize(&canon(128, vec![span(SpanLabel::Fog, 0, 21)]), &cfg, LabelRule::FogTail).unwrap();
        assert_eq!(early[0].label, WindowLabel::NonFog);
        let late = windowize(&canon(128, vec![span(SpanLabel::Fog, 100, 128)]), &cfg, LabelRule::FogTail).unwrap();
        assert_eq!(late[0].label, WindowLabel::Fog);
        let edge = windowize(&canon(128, vec![span(SpanLabel::Fog, 0, 90)]), &cfg, LabelRule::FogTail).unwrap();
        assert_eq!(edge[0].label, WindowLabel::NonFog);
        let edge = windowize(&canon(128, vec![span(SpanLabel::Fog, 0, 91)]), &cfg, LabelRule::FogTail).unwrap();
        assert_eq!(edge[0].label, WindowLabel::Fog);
    }

    #[test]
    fn invalid_regions_split_segments() {
        let s = canon(600, vec![span(SpanLabel::Invalid, 200, 260)]);
        let w = windowize(&s, &WindowConfig::default(), LabelRule::FogTail).unwrap();
        assert_eq!(w.len(), expected_window_count(200, 128, 64) + expected_window_count(340, 128, 64));
        for win in &w {
            let t0 = win.start_time_s;
            assert!(t0 + 1.28 <= 2.0 + 1e-9 || t0 >= 2.6 - 1e-9);
        }
    }

    #[test]
    fn majority_activity() {
        let spans = vec![
            span(SpanLabel::Activity(activity::SITTING), 0, 50),
            span(SpanLabel::Activity(activity::WALKING), 50, 128),
        ];
        let w = windowize(&canon(128, spans), &WindowConfig::default(), LabelRule::ActivityMajority).unwrap();
        assert_eq!(w[0].label, WindowLabel::Activity(activity::WALKING));
        assert_eq!(w[0].label.trigger_class(), 0);
    }

    #[test]
    fn bad_overlap_is_config_error() {
        let cfg = WindowConfig { len: 128, overlap: 0.3 };
        assert!(matches!(cfg.hop(), Err(Error::Config(_))));
    }
}
