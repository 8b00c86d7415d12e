//! PAMAP2 protocol files: 54 whitespace-separated columns at 100 Hz
//! (timestamp, activity id, heart rate, then hand, chest and ankle IMUs of
//! 17 columns each). Missing readings are written as `NaN`.

use std::path::Path;

use super::types::{runs_to_spans, ModalityMask, SensorLocation, SensorSite, SensorStream, Side, SpanLabel};
use crate::error::{Error, Result};

pub const PAMAP2_RATE_HZ: f64 = 100.0;
pub const PAMAP2_COLUMNS: usize = 54;
/// Longest run of missing samples that is bridged by interpolation.
pub const MAX_INTERP_GAP: usize = 3;

const IMU_BLOCKS: [(SensorSite, usize); 3] = [
    (SensorSite::Wrist, 3),
    (SensorSite::Chest, 20),
    (SensorSite::Ankle, 37),
];
// Offsets inside a 17-column IMU block: temperature, ±16g accel, ±6g accel,
// gyro, magnetometer, orientation quaternion.
const ACC16: usize = 1;
const GYRO: usize = 7;
const MAG: usize = 10;

pub fn load_pamap2(path: &Path) -> Result<Vec<SensorStream>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let subject = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("pamap2")
        .to_string();
    parse_pamap2(&text, &subject)
}

pub fn parse_pamap2(text: &str, subject_id: &str) -> Result<Vec<SensorStream>> {
    let mut rows: Vec<[f64; PAMAP2_COLUMNS]> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != PAMAP2_COLUMNS {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected {PAMAP2_COLUMNS} columns, found {}", fields.len()),
            });
        }
        let mut row = [0f64; PAMAP2_COLUMNS];
        for (slot, f) in row.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("non-numeric field {f:?}"),
            })?;
        }
        if !row[0].is_finite() || !row[1].is_finite() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "timestamp and activity id must be present".into(),
            });
        }
        if rows.last().is_some_and(|prev| row[0] <= prev[0]) {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("timestamp {} does not increase", row[0]),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("PAMAP2 file for {subject_id} has no rows")));
    }
    IMU_BLOCKS
        .iter()
        .map(|&(site, base)| build_stream(&rows, site, base, subject_id))
        .collect()
}

fn build_stream(rows: &[[f64; PAMAP2_COLUMNS]], site: SensorSite, base: usize, subject_id: &str) -> Result<SensorStream> {
    let cols: Vec<usize> = [ACC16, GYRO, MAG]
        .iter()
        .flat_map(|&off| (0..3).map(move |a| base + off + a))
        .collect();
    let mut data: Vec<Vec<f64>> = cols.iter().map(|&c| rows.iter().map(|r| r[c]).collect()).collect();
    for channel in &mut data {
        fill_short_gaps(channel, MAX_INTERP_GAP);
    }
    let keep: Vec<usize> = (0..rows.len())
        .filter(|&i| data.iter().all(|ch| ch[i].is_finite()))
        .collect();
    let timestamps: Vec<f64> = keep.iter().map(|&i| rows[i][0]).collect();
    let mut channels = Vec::with_capacity(keep.len() * cols.len());
    for &i in &keep {
        channels.extend(data.iter().map(|ch| ch[i] as f32));
    }
    let labels: Vec<Option<SpanLabel>> = keep
        .iter()
        .map(|&i| Some(SpanLabel::Activity(rows[i][1].clamp(0.0, 255.0) as u8)))
        .collect();
    let annotations = if timestamps.is_empty() {
        Vec::new()
    } else {
        runs_to_spans(&timestamps, &labels, PAMAP2_RATE_HZ)
    };
    Ok(SensorStream {
        subject_id: subject_id.to_string(),
        location: SensorLocation::new(site, Side::Unknown),
        native_rate_hz: PAMAP2_RATE_HZ,
        modalities: ModalityMask::FULL,
        timestamps_s: timestamps,
        channels,
        annotations,
    })
}

/// Linearly interpolates interior runs of non-finite values no longer than
/// `max_gap`; longer runs and runs touching either end are left in place.
pub fn fill_short_gaps(x: &mut [f64], max_gap: usize) {
    let mut i = 0;
    while i < x.len() {
        if x[i].is_finite() {
            i += 1;
            continue;
        }
        let start = i;
        while i < x.len() && !x[i].is_finite() {
            i += 1;
        }
        let len = i - start;
        if start > 0 && i < x.len() && len <= max_gap {
            let (a, b) = (x[start - 1], x[i]);
            for k in 0..len {
                let frac = (k + 1) as f64 / (len + 1) as f64;
                x[start + k] = a + (b - a) * frac;
            }
        }
    }
}
