//! Writers that render synthetic recordings in the public dataset layouts,
//! for end-to-end runs where the real corpora are not at hand.

use super::daphnet::{format_daphnet, DAPHNET_RATE_HZ};
use super::synth::{random_fog_schedule, synth_gait, Episode, GaitState, SubjectTraits, SynthParams};
use super::types::{ModalityMask, SensorLocation, SensorSite, SensorStream, Side, SpanLabel};
use crate::error::Result;
use crate::rng;

/// A Daphnet-format subject file: three accel-only placements sharing one
/// FoG walking protocol, with invalid (annotation 0) lead-in and lead-out.
pub fn synthetic_daphnet_file(subject_id: &str, walking_s: f64, seed: u64) -> Result<String> {
    let mut r = rng::child(seed, &[rng::tag(subject_id)]);
    let traits = SubjectTraits::sample(&mut r);
    let mut schedule = vec![Episode::new(GaitState::Stand, 3.0)];
    schedule.extend(random_fog_schedule(walking_s, &mut r));
    schedule.push(Episode::new(GaitState::Stand, 3.0));
    let mut streams: Vec<SensorStream> = [SensorSite::Ankle, SensorSite::Thigh, SensorSite::Trunk]
        .iter()
        .enumerate()
        .map(|(k, &site)| {
            let mut p = SynthParams::new(subject_id, SensorLocation::new(site, Side::Unknown), schedule.clone());
            p.rate_hz = DAPHNET_RATE_HZ;
            p.modalities = ModalityMask::ACCEL;
            p.traits = Some(traits);
            synth_gait(&p, rng::derive(seed, &[rng::tag(subject_id), k as u64]))
        })
        .collect::<Result<_>>()?;
    // Daphnet timestamps are integer milliseconds.
    for s in &mut streams {
        for t in &mut s.timestamps_s {
            *t = (*t * 1000.0).round() / 1000.0 + 0.015;
        }
        for a in &mut s.annotations {
            a.start_s = (a.start_s * 1000.0).round() / 1000.0 + 0.015;
            a.end_s = (a.end_s * 1000.0).round() / 1000.0 + 0.015;
        }
        let n = s.annotations.len();
        s.annotations[0].label = SpanLabel::Invalid;
        s.annotations[n - 1].label = SpanLabel::Invalid;
    }
    Ok(format_daphnet(&streams[0], &streams[1], &streams[2]))
}

/// A PAMAP2-format protocol file (54 columns, 100 Hz) for a healthy
/// subject cycling through sitting, standing and walking. When `with_gaps`
/// is set, a two-sample ankle-gyro dropout (bridged on load) and a six-row
/// wrist dropout (dropped on load) are injected.
pub fn synthetic_pamap2_file(subject_id: &str, duration_s: f64, seed: u64, with_gaps: bool) -> Result<String> {
    let mut r = rng::child(seed, &[rng::tag(subject_id)]);
    let traits = SubjectTraits::sample(&mut r);
    let block = duration_s / 6.0;
    let schedule = vec![
        Episode::new(GaitState::Sit, block),
        Episode::new(GaitState::Stand, block),
        Episode::new(GaitState::Walk, 2.0 * block),
        Episode::new(GaitState::Stand, block),
        Episode::new(GaitState::Sit, block),
    ];
    let streams: Vec<SensorStream> = [SensorSite::Wrist, SensorSite::Chest, SensorSite::Ankle]
        .iter()
        .enumerate()
        .map(|(k, &site)| {
            let mut p = SynthParams::new(subject_id, SensorLocation::new(site, Side::Unknown), schedule.clone());
            p.modalities = ModalityMask::FULL;
            p.traits = Some(traits);
            synth_gait(&p, rng::derive(seed, &[rng::tag(subject_id), 100 + k as u64]))
        })
        .collect::<Result<_>>()?;
    let n = streams[0].len();
    let mut out = String::with_capacity(n * 400);
    for i in 0..n {
        let t = streams[0].timestamps_s[i];
        let act = streams[0]
            .annotations
            .iter()
            .find(|a| a.contains(t))
            .map(|a| match a.label {
                SpanLabel::Activity(id) => id,
                _ => 0,
            })
            .unwrap_or(0);
        out.push_str(&format!("{:.2} {} NaN", t + 5.0, act));
        for (k, s) in streams.iter().enumerate() {
            let v = s.sample(i);
            let mut cols: Vec<String> = Vec::with_capacity(17);
            cols.push("31.5".into());
            cols.extend(v[0..3].iter().map(|x| format!("{x:.6}")));
            cols.extend(v[0..3].iter().map(|x| format!("{:.6}", x.clamp(-58.8, 58.8))));
            cols.extend(v[3..9].iter().map(|x| format!("{x:.6}")));
            cols.extend(["1", "0", "0", "0"].map(String::from));
            if with_gaps {
                let mid = n / 2;
                if k == 2 && (mid..mid + 2).contains(&i) {
                    for c in &mut cols[7..10] {
                        *c = "NaN".into();
                    }
                }
                if k == 0 && (mid + 100..mid + 106).contains(&i) {
                    for c in &mut cols[1..13] {
                        *c = "NaN".into();
                    }
                }
            }
            out.push(' ');
            out.push_str(&cols.join(" "));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu_data::{parse_daphnet, parse_pamap2};

    #[test]
    fn daphnet_fixture_round_trips_through_loader() {
        let text = synthetic_daphnet_file("S01", 30.0, 1).unwrap();
        let streams = parse_daphnet(&text, "S01").unwrap();
        assert_eq!(streams.len(), 3);
        for s in &streams {
            s.validate().unwrap();
            assert_eq!(s.annotations.first().unwrap().label, SpanLabel::Invalid);
            assert!(s.annotations.iter().any(|a| a.label == SpanLabel::Fog));
        }
    }

    #[test]
    fn pamap2_fixture_gap_policy() {
        let text = synthetic_pamap2_file("subject101", 12.0, 2, true).unwrap();
        let raw_lines = text.lines().count();
        let streams = parse_pamap2(&text, "subject101").unwrap();
        assert_eq!(streams[2].len(), raw_lines, "short ankle gap is interpolated");
        assert_eq!(streams[0].len(), raw_lines - 6, "long wrist gap is dropped");
        assert_eq!(streams[1].len(), raw_lines);
    }
}
