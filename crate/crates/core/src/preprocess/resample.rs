use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::imu_data::{AnnotationSpan, SensorStream};
use crate::rng;

pub const TARGET_RATE_HZ: f64 = 100.0;

/// Natural cubic spline through `(x, y)`; `x` strictly increasing.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::Shape(format!("spline knots {n} vs values {}", y.len())));
        }
        if n < 4 {
            return Err(Error::InsufficientData(format!("spline needs ≥ 4 samples, got {n}")));
        }
        // Tridiagonal system for second derivatives, m[0] = m[n-1] = 0.
        let mut m = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            let denom = b - a * c[i - 1];
            c[i] = h1 / denom;
            d[i] = (rhs - a * d[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        Ok(NaturalSpline { x: x.to_vec(), y: y.to_vec(), m })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

fn clip_spans(spans: &[AnnotationSpan], lo: f64, hi: f64) -> Vec<AnnotationSpan> {
    spans
        .iter()
        .filter_map(|s| {
            let a = s.start_s.max(lo);
            let b = s.end_s.min(hi);
            (a < b).then_some(AnnotationSpan { label: s.label, start_s: a, end_s: b })
        })
        .collect()
}

/// Brings a stream to `target_hz`. Upsampling evaluates a natural cubic
/// spline per channel on a uniform grid over the original extent.
/// Downsampling keeps a random, order-preserving subset of each one-second
/// segment and re-grids the survivors to a uniform clock.
pub fn resample(stream: &SensorStream, target_hz: f64, seed: u64) -> Result<SensorStream> {
    let n = stream.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "stream {} has {n} samples; resampling needs ≥ 4",
            stream.subject_id
        )));
    }
    if !(target_hz > 0.0) || !(stream.native_rate_hz > 0.0) {
        return Err(Error::Config(format!(
            "rates must be positive (native {}, target {target_hz})",
            stream.native_rate_hz
        )));
    }
    if (stream.native_rate_hz - target_hz).abs() < 1e-9 {
        return Ok(stream.clone());
    }
    let c = stream.n_channels();
    let t0 = stream.timestamps_s[0];
    let (timestamps, channels) = if stream.native_rate_hz < target_hz {
        let last = stream.timestamps_s[n - 1];
        let m = ((last - t0) * target_hz + 1e-9).floor() as usize + 1;
        let grid: Vec<f64> = (0..m).map(|k| t0 + k as f64 / target_hz).collect();
        let mut out = vec![0f32; m * c];
        let mut col = vec![0f64; n];
        for ch in 0..c {
            for (v, x) in col.iter_mut().zip(stream.channel(ch)) {
                *v = x as f64;
            }
            let spline = NaturalSpline::new(&stream.timestamps_s, &col)?;
            for (k, &t) in grid.iter().enumerate() {
                out[k * c + ch] = spline.eval(t) as f32;
            }
        }
        (grid, out)
    } else {
        let mut r = rng::child(seed, &[rng::tag(&stream.subject_id), stream.location.location_id() as u64]);
        let ratio = target_hz / stream.native_rate_hz;
        let mut kept = Vec::with_capacity((n as f64 * ratio) as usize + 1);
        let mut i = 0;
        while i < n {
            let seg = ((stream.timestamps_s[i] - t0) + 1e-9).floor();
            let mut j = i + 1;
            while j < n && ((stream.timestamps_s[j] - t0) + 1e-9).floor() == seg {
                j += 1;
            }
            let count = j - i;
            let keep = ((count as f64 * ratio).round() as usize).min(count).min(target_hz.floor() as usize);
            let mut idx = sample(&mut r, count, keep).into_vec();
            idx.sort_unstable();
            kept.extend(idx.into_iter().map(|k| i + k));
            i = j;
        }
        let grid: Vec<f64> = (0..kept.len()).map(|k| t0 + k as f64 / target_hz).collect();
        let mut out = Vec::with_capacity(kept.len() * c);
        for &k in &kept {
            out.extend_from_slice(stream.sample(k));
        }
        (grid, out)
    };
    let hi = timestamps.last().copied().unwrap_or(t0) + 1.0 / target_hz;
    Ok(SensorStream {
        subject_id: stream.subject_id.clone(),
        location: stream.location,
        native_rate_hz: target_hz,
        modalities: stream.modalities,
        annotations: clip_spans(&stream.annotations, t0, hi),
        timestamps_s: timestamps,
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu_data::{ModalityMask, SensorLocation, SensorSite, Side};

    fn stream(rate: f64, secs: f64, f: impl Fn(f64) -> f32) -> SensorStream {
        let n = (rate * secs).round() as usize;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
        let channels = ts.iter().flat_map(|&t| [f(t), 0.0, 9.8]).collect();
        SensorStream {
            subject_id: "s".into(),
            location: SensorLocation::new(SensorSite::Ankle, Side::Left),
            native_rate_hz: rate,
            modalities: ModalityMask::ACCEL,
            timestamps_s: ts,
            channels,
            annotations: vec![],
        }
    }

    #[test]
    fn constants_survive_upsampling() {
        let s = stream(64.0, 2.0, |_| 3.25);
        let out = resample(&s, 100.0, 0).unwrap();
        assert!(out.channel(0).all(|v| (v - 3.25).abs() < 1e-6));
        assert!(out.channel(2).all(|v| (v - 9.8).abs() < 1e-5));
    }

    #[test]
    fn sine_upsampling_tracks_analytic_signal() {
        let w = 2.0 * std::f64::consts::PI;
        let s = stream(64.0, 4.0, |t| (w * t).sin() as f32);
        let out = resample(&s, 100.0, 0).unwrap();
        let span = s.timestamps_s.last().unwrap();
        let (lo, hi) = (0.05 * span, 0.95 * span);
        let err = out
            .timestamps_s
            .iter()
            .zip(out.channel(0))
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(t, v)| (v as f64 - (w * t).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn downsampling_regrids() {
        let s = stream(128.0, 2.0, |t| t as f32);
        let out = resample(&s, 100.0, 9).unwrap();
        assert_eq!(out.len(), 200);
        for (k, t) in out.timestamps_s.iter().enumerate() {
            assert!((t - k as f64 * 0.01).abs() < 1e-12);
        }
        let kept: Vec<f32> = out.channel(0).collect();
        assert!(kept.windows(2).all(|w| w[1] > w[0]), "order preserved");
        assert_eq!(resample(&s, 100.0, 9).unwrap(), out);
    }

    #[test]
    fn too_short_is_insufficient() {
        let s = stream(64.0, 3.0 / 64.0, |_| 0.0);
        assert!(matches!(resample(&s, 100.0, 0), Err(Error::InsufficientData(_))));
    }
}
