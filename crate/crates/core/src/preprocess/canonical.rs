use serde::{Deserialize, Serialize};

use super::resample::TARGET_RATE_HZ;
use crate::error::{Error, Result};
use crate::imu_data::{AnnotationSpan, SensorLocation, SensorStream};

pub const N_CHANNELS: usize = 9;

/// Signed permutation applied to every 3-axis modality: `out = M · in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[[i8; 3]; 3]", into = "[[i8; 3]; 3]")]
pub struct AxisMap {
    m: [[i8; 3]; 3],
}

impl AxisMap {
    pub const IDENTITY: AxisMap = AxisMap {
        m: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    };

    pub fn new(m: [[i8; 3]; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for row in &m {
            let nz: Vec<usize> = (0..3).filter(|&j| row[j] != 0).collect();
            if nz.len() != 1 || row[nz[0]].abs() != 1 || seen[nz[0]] {
                return Err(Error::Config(format!("axis map {m:?} is not a signed permutation")));
            }
            seen[nz[0]] = true;
        }
        Ok(AxisMap { m })
    }

    pub fn matrix(&self) -> [[i8; 3]; 3] {
        self.m
    }

    pub fn inverse(&self) -> AxisMap {
        let mut t = [[0i8; 3]; 3];
        for (i, row) in self.m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                t[j][i] = v;
            }
        }
        AxisMap { m: t }
    }

    pub fn apply(&self, v: [f32; 3]) -> [f32; 3] {
        let mut out = [0f32; 3];
        for (o, row) in out.iter_mut().zip(&self.m) {
            for (j, &s) in row.iter().enumerate() {
                match s {
                    1 => *o = v[j],
                    -1 => *o = -v[j],
                    _ => {}
                }
            }
        }
        out
    }
}

impl Default for AxisMap {
    fn default() -> Self {
        AxisMap::IDENTITY
    }
}

impl TryFrom<[[i8; 3]; 3]> for AxisMap {
    type Error = Error;
    fn try_from(m: [[i8; 3]; 3]) -> Result<Self> {
        AxisMap::new(m)
    }
}

impl From<AxisMap> for [[i8; 3]; 3] {
    fn from(a: AxisMap) -> Self {
        a.m
    }
}

/// A 100 Hz stream in the shared nine-slot layout
/// `(ax, ay, az, gx, gy, gz, mx, my, mz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalStream {
    pub subject_id: String,
    pub location: SensorLocation,
    pub rate_hz: f64,
    pub timestamps_s: Vec<f64>,
    /// Row-major `[T × 9]`.
    pub channels: Vec<f32>,
    pub present_mask: [bool; N_CHANNELS],
    pub annotations: Vec<AnnotationSpan>,
}

impl CanonicalStream {
    pub fn len(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_s.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.channels[i * N_CHANNELS..(i + 1) * N_CHANNELS]
    }
}

pub fn present_mask_for(modalities: [bool; 3]) -> [bool; N_CHANNELS] {
    let mut mask = [false; N_CHANNELS];
    for (m, &on) in modalities.iter().enumerate() {
        mask[3 * m..3 * m + 3].fill(on);
    }
    mask
}

pub fn canonicalize(stream: &SensorStream, axis_map: &AxisMap) -> Result<CanonicalStream> {
    if (stream.native_rate_hz - TARGET_RATE_HZ).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "stream {} is at {} Hz; resample to {TARGET_RATE_HZ} Hz first",
            stream.subject_id, stream.native_rate_hz
        )));
    }
    let present = stream.modalities.as_array();
    let c = stream.n_channels();
    let t = stream.len();
    let mut channels = vec![0f32; t * N_CHANNELS];
    for i in 0..t {
        let src = stream.sample(i);
        let dst = &mut channels[i * N_CHANNELS..(i + 1) * N_CHANNELS];
        let mut k = 0;
        for (m, &on) in present.iter().enumerate() {
            if on {
                let v = axis_map.apply([src[k], src[k + 1], src[k + 2]]);
                dst[3 * m..3 * m + 3].copy_from_slice(&v);
                k += 3;
            }
        }
        debug_assert_eq!(k, c);
    }
    Ok(CanonicalStream {
        subject_id: stream.subject_id.clone(),
        location: stream.location,
        rate_hz: TARGET_RATE_HZ,
        timestamps_s: stream.timestamps_s.clone(),
        channels,
        present_mask: present_mask_for(present),
        annotations: stream.annotations.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu_data::{ModalityMask, SensorSite, Side};

    fn stream(mods: ModalityMask) -> SensorStream {
        let c = mods.n_channels();
        SensorStream {
            subject_id: "a".into(),
            location: SensorLocation::new(SensorSite::Wrist, Side::Right),
            native_rate_hz: 100.0,
            modalities: mods,
            timestamps_s: vec![0.0, 0.01, 0.02],
            channels: (0..3 * c).map(|v| v as f32 + 0.5).collect(),
            annotations: vec![],
        }
    }

    #[test]
    fn accel_only_is_zero_padded() {
        let out = canonicalize(&stream(ModalityMask::ACCEL), &AxisMap::IDENTITY).unwrap();
        assert_eq!(out.present_mask, [true, true, true, false, false, false, false, false, false]);
        for i in 0..3 {
            assert!(out.row(i)[3..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn swap_with_negation() {
        let map = AxisMap::new([[0, -1, 0], [1, 0, 0], [0, 0, 1]]).unwrap();
        let s = stream(ModalityMask::ACCEL);
        let out = canonicalize(&s, &map).unwrap();
        assert_eq!(out.row(0)[0], -s.sample(0)[1]);
        assert_eq!(out.row(0)[1], s.sample(0)[0]);
    }

    #[test]
    fn identity_full_is_bit_exact() {
        let s = stream(ModalityMask::FULL);
        let out = canonicalize(&s, &AxisMap::IDENTITY).unwrap();
        assert_eq!(out.channels, s.channels);
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(AxisMap::new([[1, 1, 0], [0, 1, 0], [0, 0, 1]]).is_err());
        assert!(AxisMap::new([[2, 0, 0], [0, 1, 0], [0, 0, 1]]).is_err());
        assert!(AxisMap::new([[1, 0, 0], [1, 0, 0], [0, 0, 1]]).is_err());
    }

    #[test]
    fn wrong_rate_is_config_error() {
        let mut s = stream(ModalityMask::ACCEL);
        s.native_rate_hz = 64.0;
        assert!(matches!(canonicalize(&s, &AxisMap::IDENTITY), Err(Error::Config(_))));
    }
}
