//! Daphnet freezing-of-gait recordings: whitespace-separated rows of
//! `time_ms, ankle xyz, thigh xyz, trunk xyz, annotation` with
//! acceleration in milli-g and annotation 0 = invalid, 1 = no freeze,
//! 2 = freeze.

use std::path::Path;

use super::types::{runs_to_spans, ModalityMask, SensorLocation, SensorSite, SensorStream, Side, SpanLabel};
use crate::error::{Error, Result};

pub const DAPHNET_RATE_HZ: f64 = 64.0;
pub const MILLI_G_TO_MS2: f64 = 9.80665 / 1000.0;
const COLUMNS: usize = 11;
const SITES: [SensorSite; 3] = [SensorSite::Ankle, SensorSite::Thigh, SensorSite::Trunk];

pub fn load_daphnet(path: &Path) -> Result<Vec<SensorStream>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_daphnet(&text, &subject_from_path(path))
}

/// `S01R02.txt` → `S01`; anything else → the file stem.
pub fn subject_from_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("unknown");
    match stem.find('R') {
        Some(i) if stem.starts_with('S') && i > 1 => stem[..i].to_string(),
        _ => stem.to_string(),
    }
}

pub fn parse_daphnet(text: &str, subject_id: &str) -> Result<Vec<SensorStream>> {
    let mut timestamps = Vec::new();
    let mut values: [Vec<f32>; 3] = Default::default();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != COLUMNS {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected {COLUMNS} columns, found {}", fields.len()),
            });
        }
        let mut row = [0f64; COLUMNS];
        for (slot, f) in row.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("non-numeric field {f:?}"),
            })?;
            if !slot.is_finite() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("non-finite field {f:?}"),
                });
            }
        }
        let t = row[0] / 1000.0;
        if timestamps.last().is_some_and(|&prev| t <= prev) {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("timestamp {} ms does not increase", row[0]),
            });
        }
        timestamps.push(t);
        for (s, vals) in values.iter_mut().enumerate() {
            for axis in 0..3 {
                vals.push((row[1 + 3 * s + axis] * MILLI_G_TO_MS2) as f32);
            }
        }
        labels.push(match row[10] as i64 {
            0 => SpanLabel::Invalid,
            1 => SpanLabel::NonFog,
            2 => SpanLabel::Fog,
            other => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("annotation {other} not in {{0, 1, 2}}"),
                })
            }
        });
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyInput(format!("Daphnet file for {subject_id} has no rows")));
    }
    let labels: Vec<Option<SpanLabel>> = labels.into_iter().map(Some).collect();
    let spans = runs_to_spans(&timestamps, &labels, DAPHNET_RATE_HZ);
    let streams = SITES
        .iter()
        .zip(values)
        .map(|(&site, channels)| SensorStream {
            subject_id: subject_id.to_string(),
            location: SensorLocation::new(site, Side::Unknown),
            native_rate_hz: DAPHNET_RATE_HZ,
            modalities: ModalityMask::ACCEL,
            timestamps_s: timestamps.clone(),
            channels,
            annotations: spans.clone(),
        })
        .collect();
    Ok(streams)
}

/// Writes rows in the Daphnet layout. `ankle`, `thigh` and `trunk` are
/// accel-only streams sharing one clock; labels come from `ankle`'s spans.
pub fn format_daphnet(ankle: &SensorStream, thigh: &SensorStream, trunk: &SensorStream) -> String {
    let mut out = String::new();
    for i in 0..ankle.len() {
        let t = ankle.timestamps_s[i];
        let code = ankle
            .annotations
            .iter()
            .find(|s| s.contains(t))
            .map(|s| match s.label {
                SpanLabel::Fog => 2,
                SpanLabel::Invalid => 0,
                _ => 1,
            })
            .unwrap_or(0);
        out.push_str(&format!("{}", (t * 1000.0).round() as i64));
        for s in [ankle, thigh, trunk] {
            for v in s.sample(i).iter().take(3) {
                out.push_str(&format!(" {}", (*v as f64 / MILLI_G_TO_MS2).round() as i64));
            }
        }
        out.push_str(&format!(" {code}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t_ms: i64, ankle_x: i64, label: u8) -> String {
        format!("{t_ms} {ankle_x} 0 1000 0 0 1000 0 0 1000 {label}\n")
    }

    #[test]
    fn converts_milli_g_to_si() {
        let text = row(1000, 100, 1) + &row(1016, 0, 1);
        let streams = parse_daphnet(&text, "S01").unwrap();
        assert_eq!(streams.len(), 3);
        let ankle = &streams[0];
        assert_eq!(ankle.location.site, SensorSite::Ankle);
        assert_eq!(ankle.timestamps_s[0], 1.0);
        assert!((ankle.sample(0)[0] as f64 - 0.980665).abs() < 1e-6);
        assert_eq!(ankle.native_rate_hz, 64.0);
        assert_eq!(ankle.modalities, ModalityMask::ACCEL);
    }

    #[test]
    fn all_walking_annotation_gives_one_non_fog_span() {
        let text: String = (0..50).map(|i| row(i * 15 + 15, 10, 1)).collect();
        let s = &parse_daphnet(&text, "S02").unwrap()[0];
        assert_eq!(s.annotations.len(), 1);
        assert_eq!(s.annotations[0].label, SpanLabel::NonFog);
        assert!(s.annotations.iter().all(|a| a.label != SpanLabel::Fog));
        s.validate().unwrap();
    }

    #[test]
    fn invalid_rows_become_invalid_spans() {
        let text: String = (0..30)
            .map(|i| row(i * 15 + 15, 0, if (10..20).contains(&i) { 0 } else { 2 }))
            .collect();
        let s = &parse_daphnet(&text, "S03").unwrap()[0];
        let labels: Vec<_> = s.annotations.iter().map(|a| a.label).collect();
        assert_eq!(labels, vec![SpanLabel::Fog, SpanLabel::Invalid, SpanLabel::Fog]);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = row(15, 0, 1) + "30 1 2 3\n";
        match parse_daphnet(&text, "S01") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = row(15, 0, 1) + "30 1 2 3 4 5 6 7 8 x 1\n";
        assert!(matches!(parse_daphnet(&text, "S01"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_daphnet("", "S01"), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn subject_id_from_file_name() {
        assert_eq!(subject_from_path(Path::new("/d/S07R02.txt")), "S07");
        assert_eq!(subject_from_path(Path::new("other.txt")), "other");
    }
}
