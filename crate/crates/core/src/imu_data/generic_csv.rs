//! Headered CSV recordings described by a user-supplied schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{runs_to_spans, ModalityMask, SensorLocation, SensorStream, SpanLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Accel,
    Gyro,
    Mag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "m/s2")]
    MetersPerSecond2,
    #[serde(rename = "g")]
    G,
    #[serde(rename = "mg")]
    MilliG,
    #[serde(rename = "rad/s")]
    RadPerSecond,
    #[serde(rename = "deg/s")]
    DegPerSecond,
    #[serde(rename = "uT")]
    MicroTesla,
    #[serde(rename = "gauss")]
    Gauss,
}

impl Unit {
    fn to_si(self) -> f64 {
        match self {
            Unit::MetersPerSecond2 | Unit::RadPerSecond | Unit::MicroTesla => 1.0,
            Unit::G => 9.80665,
            Unit::MilliG => 9.80665e-3,
            Unit::DegPerSecond => std::f64::consts::PI / 180.0,
            Unit::Gauss => 100.0,
        }
    }

    fn modality(self) -> Modality {
        match self {
            Unit::MetersPerSecond2 | Unit::G | Unit::MilliG => Modality::Accel,
            Unit::RadPerSecond | Unit::DegPerSecond => Modality::Gyro,
            Unit::MicroTesla | Unit::Gauss => Modality::Mag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub column: String,
    pub modality: Modality,
    pub axis: Axis,
    pub unit: Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    S,
    Ms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub subject_id: String,
    pub timestamp_column: String,
    #[serde(default)]
    pub timestamp_unit: TimeUnit,
    pub channels: Vec<ChannelSpec>,
    pub location: SensorLocation,
    pub rate_hz: f64,
    /// Binary FoG column (non-zero = freeze).
    #[serde(default)]
    pub label_column: Option<String>,
}

pub fn load_generic_csv(path: &Path, schema: &CsvSchema) -> Result<SensorStream> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_generic_csv(file, schema)
}

pub fn read_generic_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<SensorStream> {
    // Resolve channel specs into canonical (modality, axis) slots.
    let mut slots: [[Option<&ChannelSpec>; 3]; 3] = Default::default();
    for spec in &schema.channels {
        if spec.unit.modality() != spec.modality {
            return Err(Error::Config(format!(
                "column {}: unit {:?} does not measure {:?}",
                spec.column, spec.unit, spec.modality
            )));
        }
        let slot = &mut slots[spec.modality as usize][spec.axis as usize];
        if slot.is_some() {
            return Err(Error::Config(format!("duplicate {:?} {:?} channel", spec.modality, spec.axis)));
        }
        *slot = Some(spec);
    }
    let present: Vec<bool> = slots
        .iter()
        .map(|m| {
            let n = m.iter().filter(|s| s.is_some()).count();
            if n == 0 || n == 3 {
                Ok(n == 3)
            } else {
                Err(Error::Config("every modality needs all three axes".into()))
            }
        })
        .collect::<Result<_>>()?;
    let modalities = ModalityMask {
        has_accel: present[0],
        has_gyro: present[1],
        has_mag: present[2],
    };
    if !modalities.has_accel {
        return Err(Error::Config("schema has no accelerometer channels".into()));
    }
    if !(schema.rate_hz > 0.0) {
        return Err(Error::Config(format!("rate {} must be positive", schema.rate_hz)));
    }

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column {name:?} not found in CSV header")))
    };
    let ts_col = col(&schema.timestamp_column)?;
    let ordered: Vec<(usize, f64)> = slots
        .iter()
        .flatten()
        .flatten()
        .map(|s| Ok((col(&s.column)?, s.unit.to_si())))
        .collect::<Result<_>>()?;
    let label_col = schema.label_column.as_deref().map(col).transpose()?;
    let ts_scale = match schema.timestamp_unit {
        TimeUnit::S => 1.0,
        TimeUnit::Ms => 1e-3,
    };

    let mut timestamps = Vec::new();
    let mut channels = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let num = |c: usize| -> Result<f64> {
            let raw = rec.get(c).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing column {c}"),
            })?;
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                msg: format!("bad numeric value {raw:?}"),
            })
        };
        let t = num(ts_col)? * ts_scale;
        if timestamps.last().is_some_and(|&p| t <= p) {
            return Err(Error::Parse {
                line,
                msg: "timestamps must increase".into(),
            });
        }
        timestamps.push(t);
        for &(c, scale) in &ordered {
            channels.push((num(c)? * scale) as f32);
        }
        if let Some(c) = label_col {
            labels.push((num(c)? != 0.0).then_some(SpanLabel::Fog));
        }
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyInput(format!("CSV for {} has no rows", schema.subject_id)));
    }
    let annotations = if label_col.is_some() {
        runs_to_spans(&timestamps, &labels, schema.rate_hz)
    } else {
        Vec::new()
    };
    Ok(SensorStream {
        subject_id: schema.subject_id.clone(),
        location: schema.location,
        native_rate_hz: schema.rate_hz,
        modalities,
        timestamps_s: timestamps,
        channels,
        annotations,
    })
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse { line, msg: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu_data::{SensorSite, Side};

    fn schema(label: Option<&str>, gyro: bool) -> CsvSchema {
        let mut channels = Vec::new();
        for (i, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
            channels.push(ChannelSpec {
                column: format!("a{i}"),
                modality: Modality::Accel,
                axis,
                unit: Unit::G,
            });
            if gyro {
                channels.push(ChannelSpec {
                    column: format!("g{i}"),
                    modality: Modality::Gyro,
                    axis,
                    unit: Unit::DegPerSecond,
                });
            }
        }
        CsvSchema {
            subject_id: "P01".into(),
            timestamp_column: "t".into(),
            timestamp_unit: TimeUnit::S,
            channels,
            location: SensorLocation::new(SensorSite::Ankle, Side::Left),
            rate_hz: 100.0,
            label_column: label.map(String::from),
        }
    }

    fn body(with_label: bool) -> String {
        let mut s = String::from("t,a0,a1,a2,g0,g1,g2");
        if with_label {
            s.push_str(",fog");
        }
        s.push('\n');
        for (i, l) in [0, 0, 1, 1, 0].iter().enumerate() {
            s.push_str(&format!("{},0,0,1,180,0,0", i as f64 * 0.01));
            if with_label {
                s.push_str(&format!(",{l}"));
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn six_channel_file_with_labels() {
        let s = read_generic_csv(body(true).as_bytes(), &schema(Some("fog"), true)).unwrap();
        assert_eq!(s.modalities, ModalityMask::ACCEL_GYRO);
        assert_eq!(s.n_channels(), 6);
        assert!((s.sample(0)[2] - 9.80665).abs() < 1e-5);
        assert!((s.sample(0)[3] as f64 - std::f64::consts::PI).abs() < 1e-6);
        assert_eq!(s.annotations.len(), 1);
        assert_eq!(s.annotations[0].label, SpanLabel::Fog);
        assert_eq!((s.annotations[0].start_s, s.annotations[0].end_s), (0.02, 0.04));
    }

    #[test]
    fn absent_label_column_means_no_spans() {
        let s = read_generic_csv(body(false).as_bytes(), &schema(None, false)).unwrap();
        assert!(s.annotations.is_empty());
        assert_eq!(s.modalities, ModalityMask::ACCEL);
    }

    #[test]
    fn schema_column_mismatch_is_config_error() {
        let mut sc = schema(None, false);
        sc.channels[0].column = "nope".into();
        assert!(matches!(read_generic_csv(body(false).as_bytes(), &sc), Err(Error::Config(_))));
        let mut sc = schema(None, false);
        sc.channels.pop();
        assert!(matches!(read_generic_csv(body(false).as_bytes(), &sc), Err(Error::Config(_))));
    }
}
