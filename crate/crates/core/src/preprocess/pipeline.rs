use serde::{Deserialize, Serialize};

use super::canonical::{canonicalize, AxisMap, CanonicalStream};
use super::norm::{apply_norm, fit_norm_stats, NormStats};
use super::resample::{resample, TARGET_RATE_HZ};
use super::window::{windowize, LabelRule, Window, WindowConfig};
use crate::error::Result;
use crate::imu_data::SensorStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub axis_map: AxisMap,
    pub seed: u64,
    pub window: WindowConfig,
    pub label_rule: LabelRule,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            axis_map: AxisMap::IDENTITY,
            seed: 0,
            window: WindowConfig::default(),
            label_rule: LabelRule::FogTail,
        }
    }
}

/// Resample to 100 Hz and lay out in canonical slots.
pub fn harmonize(streams: &[SensorStream], cfg: &PreprocessConfig) -> Result<Vec<CanonicalStream>> {
    streams
        .iter()
        .map(|s| canonicalize(&resample(s, TARGET_RATE_HZ, cfg.seed)?, &cfg.axis_map))
        .collect()
}

/// Normalized canonical streams plus the stats fitted over them.
pub fn harmonize_and_normalize(
    streams: &[SensorStream],
    cfg: &PreprocessConfig,
) -> Result<(Vec<CanonicalStream>, NormStats)> {
    let canon = harmonize(streams, cfg)?;
    let stats = fit_norm_stats(&canon)?;
    let normed = canon.iter().map(|s| apply_norm(s, &stats)).collect::<Result<_>>()?;
    Ok((normed, stats))
}

/// Full chain: resample, canonicalize, per-subject z-score, windowize.
pub fn prepare_windows(streams: &[SensorStream], cfg: &PreprocessConfig) -> Result<(Vec<Window>, NormStats)> {
    let (normed, stats) = harmonize_and_normalize(streams, cfg)?;
    let mut out = Vec::new();
    for s in &normed {
        out.extend(windowize(s, &cfg.window, cfg.label_rule)?);
    }
    Ok((out, stats))
}
