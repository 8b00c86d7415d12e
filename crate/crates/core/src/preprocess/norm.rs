use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::canonical::{CanonicalStream, N_CHANNELS};
use crate::error::{Error, Result};
use crate::imu_data::{SensorSite, Side, SpanLabel};

pub const NORM_EPS: f64 = 1e-8;

/// Stats are keyed per subject, placement and side, so left and right
/// ankles (and different sites of one subject) are centered independently.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NormKey {
    pub subject_id: String,
    pub site: SensorSite,
    pub side: Side,
    pub channel: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(NormKey, ChannelStats)>", into = "Vec<(NormKey, ChannelStats)>")]
pub struct NormStats {
    pub entries: BTreeMap<NormKey, ChannelStats>,
}

impl From<Vec<(NormKey, ChannelStats)>> for NormStats {
    fn from(v: Vec<(NormKey, ChannelStats)>) -> Self {
        NormStats { entries: v.into_iter().collect() }
    }
}

impl From<NormStats> for Vec<(NormKey, ChannelStats)> {
    fn from(s: NormStats) -> Self {
        s.entries.into_iter().collect()
    }
}

impl NormStats {
    pub fn get(&self, key: &NormKey) -> Option<&ChannelStats> {
        self.entries.get(key)
    }
}

fn key(s: &CanonicalStream, channel: usize) -> NormKey {
    NormKey {
        subject_id: s.subject_id.clone(),
        site: s.location.site,
        side: s.location.side,
        channel: channel as u8,
    }
}

/// Per-sample validity: false inside invalid annotation spans.
pub fn valid_rows(s: &CanonicalStream) -> Vec<bool> {
    let invalid: Vec<_> = s.annotations.iter().filter(|a| a.label == SpanLabel::Invalid).collect();
    s.timestamps_s
        .iter()
        .map(|&t| !invalid.iter().any(|a| a.contains(t)))
        .collect()
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: u64,
    sum: f64,
    min: f64,
    max: f64,
}

/// Fits z-score stats per key over present channels and valid samples,
/// pooling every session of a subject that shares the key. Standard
/// deviations are population values floored at [`NORM_EPS`].
pub fn fit_norm_stats(streams: &[CanonicalStream]) -> Result<NormStats> {
    let mut sums: BTreeMap<NormKey, Acc> = BTreeMap::new();
    let mut valids = Vec::with_capacity(streams.len());
    for s in streams {
        let valid = valid_rows(s);
        for ch in (0..N_CHANNELS).filter(|&c| s.present_mask[c]) {
            let a = sums.entry(key(s, ch)).or_insert(Acc {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                ..Acc::default()
            });
            for (i, _) in valid.iter().enumerate().filter(|(_, v)| **v) {
                let x = s.channels[i * N_CHANNELS + ch] as f64;
                a.n += 1;
                a.sum += x;
                a.min = a.min.min(x);
                a.max = a.max.max(x);
            }
        }
        valids.push(valid);
    }
    let mut means = BTreeMap::new();
    for (k, a) in &sums {
        if a.n == 0 {
            return Err(Error::InsufficientData(format!("no valid samples for {k:?}")));
        }
        let mean = if a.min == a.max { a.min } else { a.sum / a.n as f64 };
        means.insert(k.clone(), mean);
    }
    let mut sq: BTreeMap<NormKey, f64> = BTreeMap::new();
    for (s, valid) in streams.iter().zip(&valids) {
        for ch in (0..N_CHANNELS).filter(|&c| s.present_mask[c]) {
            let k = key(s, ch);
            let mean = means[&k];
            let e = sq.entry(k).or_insert(0.0);
            for (i, _) in valid.iter().enumerate().filter(|(_, v)| **v) {
                let d = s.channels[i * N_CHANNELS + ch] as f64 - mean;
                *e += d * d;
            }
        }
    }
    let entries = means
        .into_iter()
        .map(|(k, mean)| {
            let std = (sq[&k] / sums[&k].n as f64).sqrt().max(NORM_EPS);
            (k, ChannelStats { mean, std })
        })
        .collect();
    Ok(NormStats { entries })
}

/// Applies fitted stats to every present channel; absent channels stay zero.
pub fn apply_norm(stream: &CanonicalStream, stats: &NormStats) -> Result<CanonicalStream> {
    let mut out = stream.clone();
    for ch in (0..N_CHANNELS).filter(|&c| stream.present_mask[c]) {
        let k = key(stream, ch);
        let st = stats.get(&k).ok_or_else(|| Error::Key(format!("no normalization stats for {k:?}")))?;
        for v in out.channels[ch..].iter_mut().step_by(N_CHANNELS) {
            *v = ((*v as f64 - st.mean) / st.std) as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu_data::{AnnotationSpan, SensorLocation};
    use crate::preprocess::canonical::present_mask_for;

    fn canon(subject: &str, side: Side, col0: &[f32]) -> CanonicalStream {
        let n = col0.len();
        let mut channels = vec![0f32; n * N_CHANNELS];
        for (i, &v) in col0.iter().enumerate() {
            channels[i * N_CHANNELS] = v;
            channels[i * N_CHANNELS + 1] = 2.0 * v + 1.0;
            channels[i * N_CHANNELS + 2] = 7.0;
        }
        CanonicalStream {
            subject_id: subject.into(),
            location: SensorLocation::new(SensorSite::Ankle, side),
            rate_hz: 100.0,
            timestamps_s: (0..n).map(|i| i as f64 * 0.01).collect(),
            channels,
            present_mask: present_mask_for([true, false, false]),
            annotations: vec![],
        }
    }

    #[test]
    fn two_values_become_plus_minus_one() {
        let s = canon("a", Side::Left, &[1.0, 3.0]);
        let stats = fit_norm_stats(std::slice::from_ref(&s)).unwrap();
        let out = apply_norm(&s, &stats).unwrap();
        assert_eq!(out.row(0)[0], -1.0);
        assert_eq!(out.row(1)[0], 1.0);
    }

    #[test]
    fn constant_channel_becomes_zero() {
        let s = canon("a", Side::Left, &[0.1, 0.1, 0.1, 0.1]);
        let stats = fit_norm_stats(std::slice::from_ref(&s)).unwrap();
        let out = apply_norm(&s, &stats).unwrap();
        assert!(out.channels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn absent_channels_untouched_and_missing_key_errors() {
        let s = canon("a", Side::Left, &[1.0, 2.0, 4.0]);
        let stats = fit_norm_stats(std::slice::from_ref(&s)).unwrap();
        let out = apply_norm(&s, &stats).unwrap();
        assert!((0..3).all(|i| out.row(i)[3..].iter().all(|&v| v == 0.0)));
        let other = canon("b", Side::Left, &[1.0, 2.0]);
        assert!(matches!(apply_norm(&other, &stats), Err(Error::Key(_))));
    }

    #[test]
    fn invalid_regions_are_ignored_when_fitting() {
        let mut s = canon("a", Side::Left, &[1.0, 3.0, 100.0]);
        s.annotations = vec![AnnotationSpan::new(SpanLabel::Invalid, 0.02, 0.03).unwrap()];
        let stats = fit_norm_stats(std::slice::from_ref(&s)).unwrap();
        let k = key(&s, 0);
        assert_eq!(stats.get(&k).unwrap().mean, 2.0);
    }

    #[test]
    fn stats_round_trip_through_json() {
        let s = canon("a", Side::Right, &[1.0, 3.0, 8.0]);
        let stats = fit_norm_stats(&[s]).unwrap();
        let text = serde_json::to_string(&stats).unwrap();
        assert_eq!(serde_json::from_str::<NormStats>(&text).unwrap(), stats);
    }
}
