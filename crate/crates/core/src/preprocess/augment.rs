use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::canonical::N_CHANNELS;
use super::window::Window;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub jitter_max_samples: usize,
    pub noise_sigma: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            jitter_max_samples: 8,
            noise_sigma: 0.05,
        }
    }
}

impl AugmentConfig {
    pub const NONE: AugmentConfig = AugmentConfig {
        jitter_max_samples: 0,
        noise_sigma: 0.0,
    };
}

/// Circular time shift by a uniform integer in `[-jitter, +jitter]`, then
/// Gaussian noise on present channels.
pub fn augment(window: &Window, cfg: &AugmentConfig, seed: u64) -> Window {
    let mut r = rng::rng(seed);
    let rows = window.rows();
    let j = cfg.jitter_max_samples.min(rows) as i64;
    let shift = if j > 0 { r.random_range(-j..=j) } else { 0 };
    let mut out = window.clone();
    if shift != 0 {
        let k = shift.rem_euclid(rows as i64) as usize;
        out.values.rotate_right(k * N_CHANNELS);
    }
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, cfg.noise_sigma).expect("sigma is positive and finite");
        for row in out.values.chunks_exact_mut(N_CHANNELS) {
            for (v, &on) in row.iter_mut().zip(&window.present_mask) {
                if on {
                    *v += normal.sample(&mut r);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::window::WindowLabel;

    fn window() -> Window {
        let mut mask = [false; N_CHANNELS];
        mask[..3].fill(true);
        let values = (0..128 * N_CHANNELS)
            .map(|i| if i % N_CHANNELS < 3 { i as f32 } else { 0.0 })
            .collect();
        Window {
            values,
            label: WindowLabel::Fog,
            location_id: 0,
            subject_id: "x".into(),
            start_time_s: 1.0,
            present_mask: mask,
        }
    }

    #[test]
    fn zero_config_is_identity() {
        let w = window();
        assert_eq!(augment(&w, &AugmentConfig::NONE, 3), w);
    }

    #[test]
    fn absent_channels_stay_zero_and_seeded() {
        let w = window();
        let a = augment(&w, &AugmentConfig::default(), 11);
        assert_eq!(a, augment(&w, &AugmentConfig::default(), 11));
        assert!(a.values.chunks(N_CHANNELS).all(|r| r[3..].iter().all(|&v| v == 0.0)));
        assert_eq!((a.label, a.location_id, a.start_time_s), (w.label, w.location_id, w.start_time_s));
    }

    #[test]
    fn jitter_is_a_circular_shift() {
        let w = window();
        let cfg = AugmentConfig { jitter_max_samples: 8, noise_sigma: 0.0 };
        for seed in 0..20 {
            let a = augment(&w, &cfg, seed);
            let first = a.values[0] as usize / N_CHANNELS;
            let shift = (128 - first) % 128;
            assert!(shift <= 8 || shift >= 120, "shift {shift}");
            let mut sorted = a.values.clone();
            sorted.sort_by(f32::total_cmp);
            let mut orig = w.values.clone();
            orig.sort_by(f32::total_cmp);
            assert_eq!(sorted, orig);
        }
    }
}
