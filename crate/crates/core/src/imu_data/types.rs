use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorSite {
    Ankle,
    Wrist,
    Chest,
    Thigh,
    Trunk,
    LowerBack,
}

impl SensorSite {
    pub const ALL: [SensorSite; 6] = [
        SensorSite::Ankle,
        SensorSite::Wrist,
        SensorSite::Chest,
        SensorSite::Thigh,
        SensorSite::Trunk,
        SensorSite::LowerBack,
    ];

    /// Stable id used by the location embedding table.
    pub fn location_id(self) -> u8 {
        match self {
            SensorSite::Ankle => 0,
            SensorSite::Wrist => 1,
            SensorSite::Chest => 2,
            SensorSite::Thigh => 3,
            SensorSite::Trunk => 4,
            SensorSite::LowerBack => 5,
        }
    }

    pub fn from_location_id(id: u8) -> Result<Self> {
        SensorSite::ALL
            .get(id as usize)
            .copied()
            .ok_or_else(|| Error::Index(format!("location id {id} not in [0, 5]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Center,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorLocation {
    pub site: SensorSite,
    #[serde(default)]
    pub side: Side,
}

impl SensorLocation {
    pub fn new(site: SensorSite, side: Side) -> Self {
        SensorLocation { site, side }
    }

    pub fn location_id(&self) -> u8 {
        self.site.location_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModalityMask {
    pub has_accel: bool,
    pub has_gyro: bool,
    pub has_mag: bool,
}

impl ModalityMask {
    pub const ACCEL: ModalityMask = ModalityMask {
        has_accel: true,
        has_gyro: false,
        has_mag: false,
    };
    pub const ACCEL_GYRO: ModalityMask = ModalityMask {
        has_accel: true,
        has_gyro: true,
        has_mag: false,
    };
    pub const FULL: ModalityMask = ModalityMask {
        has_accel: true,
        has_gyro: true,
        has_mag: true,
    };

    pub fn count(&self) -> usize {
        [self.has_accel, self.has_gyro, self.has_mag]
            .iter()
            .filter(|&&m| m)
            .count()
    }

    pub fn n_channels(&self) -> usize {
        3 * self.count()
    }

    pub fn as_array(&self) -> [bool; 3] {
        [self.has_accel, self.has_gyro, self.has_mag]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanLabel {
    Fog,
    NonFog,
    Invalid,
    Activity(u8),
}

/// Activity ids follow the PAMAP2 protocol numbering.
pub mod activity {
    pub const LYING: u8 = 1;
    pub const SITTING: u8 = 2;
    pub const STANDING: u8 = 3;
    pub const WALKING: u8 = 4;
    pub const RUNNING: u8 = 5;
    pub const CYCLING: u8 = 6;
    pub const NORDIC_WALKING: u8 = 7;
    pub const ASCENDING_STAIRS: u8 = 12;
    pub const DESCENDING_STAIRS: u8 = 13;

    /// Ids listed in the PAMAP2 protocol (0 marks transient periods).
    pub const DOCUMENTED: [u8; 19] = [0, 1, 2, 3, 4, 5, 6, 7, 9, 10, 11, 12, 13, 16, 17, 18, 19, 20, 24];

    /// Sitting and lying are the only postures in which gait cannot freeze.
    pub fn is_sedentary(id: u8) -> bool {
        matches!(id, LYING | SITTING)
    }
}

impl SpanLabel {
    /// Standing, walking and any freeze-related label count as ambulatory.
    pub fn is_ambulatory(&self) -> bool {
        match self {
            SpanLabel::Fog | SpanLabel::NonFog => true,
            SpanLabel::Invalid => false,
            SpanLabel::Activity(id) => !activity::is_sedentary(*id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSpan {
    pub label: SpanLabel,
    pub start_s: f64,
    pub end_s: f64,
}

impl AnnotationSpan {
    pub fn new(label: SpanLabel, start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s < end_s) {
            return Err(Error::Config(format!(
                "annotation span start {start_s} must precede end {end_s}"
            )));
        }
        Ok(AnnotationSpan { label, start_s, end_s })
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }

    pub fn overlaps(&self, start: f64, end: f64) -> bool {
        self.start_s < end && start < self.end_s
    }
}

/// A timestamped multi-channel IMU recording. Channels are stored row-major
/// `[T × C]` in SI units, modalities in accel, gyro, mag order.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub subject_id: String,
    pub location: SensorLocation,
    pub native_rate_hz: f64,
    pub modalities: ModalityMask,
    pub timestamps_s: Vec<f64>,
    pub channels: Vec<f32>,
    pub annotations: Vec<AnnotationSpan>,
}

impl SensorStream {
    pub fn n_channels(&self) -> usize {
        self.modalities.n_channels()
    }

    pub fn len(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_s.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let c = self.n_channels();
        &self.channels[i * c..(i + 1) * c]
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f32> + '_ {
        let n = self.n_channels();
        self.channels.iter().skip(c).step_by(n).copied()
    }

    /// Half-open time extent `[first, last + 1/rate)`.
    pub fn extent(&self) -> (f64, f64) {
        match (self.timestamps_s.first(), self.timestamps_s.last()) {
            (Some(&a), Some(&b)) => (a, b + 1.0 / self.native_rate_hz),
            _ => (0.0, 0.0),
        }
    }

    /// Checks the structural invariants every loader must establish.
    pub fn validate(&self) -> Result<()> {
        if !self.modalities.has_accel {
            return Err(Error::Config(format!("stream {} lacks acceleration", self.subject_id)));
        }
        if self.channels.len() != self.len() * self.n_channels() {
            return Err(Error::Shape(format!(
                "stream {}: {} values for {} samples × {} channels",
                self.subject_id,
                self.channels.len(),
                self.len(),
                self.n_channels()
            )));
        }
        if self.timestamps_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "stream {}: timestamps not strictly increasing",
                self.subject_id
            )));
        }
        if let Some(v) = self.channels.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("stream {}: non-finite value {v}", self.subject_id)));
        }
        let (lo, hi) = self.extent();
        let mut spans = self.annotations.clone();
        spans.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for s in &spans {
            if s.start_s < lo - 1e-9 || s.end_s > hi + 1e-9 || !(s.start_s < s.end_s) {
                return Err(Error::Config(format!(
                    "stream {}: span [{}, {}) outside extent [{lo}, {hi})",
                    self.subject_id, s.start_s, s.end_s
                )));
            }
        }
        if spans.windows(2).any(|w| w[1].start_s < w[0].end_s - 1e-9) {
            return Err(Error::Config(format!("stream {}: overlapping spans", self.subject_id)));
        }
        Ok(())
    }
}

/// Run-length encodes per-row labels into half-open spans. A run ends at
/// the timestamp of the next run's first row; the final run ends one
/// sample period after the last row. `None` rows produce no span.
pub fn runs_to_spans(timestamps: &[f64], labels: &[Option<SpanLabel>], rate_hz: f64) -> Vec<AnnotationSpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let mut j = i + 1;
        while j < labels.len() && labels[j] == labels[i] {
            j += 1;
        }
        if let Some(label) = labels[i] {
            let end = if j < timestamps.len() {
                timestamps[j]
            } else {
                timestamps[j - 1] + 1.0 / rate_hz
            };
            spans.push(AnnotationSpan {
                label,
                start_s: timestamps[i],
                end_s: end,
            });
        }
        i = j;
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn location_ids_are_stable_and_invertible() {
        for (i, site) in SensorSite::ALL.iter().enumerate() {
            assert_eq!(site.location_id() as usize, i);
            assert_eq!(SensorSite::from_location_id(i as u8).unwrap(), *site);
        }
        assert!(SensorSite::from_location_id(6).is_err());
    }

    #[test]
    fn label_runs_become_half_open_spans() {
        let ts: Vec<f64> = (0..5).map(|i| i as f64 * 0.01).collect();
        let labels = [0u8, 0, 1, 1, 0].map(|l| if l == 1 { Some(SpanLabel::Fog) } else { None });
        let spans = runs_to_spans(&ts, &labels, 100.0);
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].start_s, spans[0].end_s), (0.02, 0.04));
    }
}
