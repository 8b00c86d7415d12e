//! Harmonization of heterogeneous IMU streams into normalized, fixed-size
//! `[128 × 9]` windows.

mod augment;
mod canonical;
mod norm;
mod pack;
mod pipeline;
mod resample;
mod window;

pub use augment::{augment, AugmentConfig};
pub use canonical::{canonicalize, present_mask_for, AxisMap, CanonicalStream, N_CHANNELS};
pub use norm::{apply_norm, fit_norm_stats, valid_rows, ChannelStats, NormKey, NormStats, NORM_EPS};
pub use pack::{load_window_pack, read_windows, save_window_pack, write_windows, PACK_MAGIC, PACK_VERSION};
pub use pipeline::{harmonize, harmonize_and_normalize, prepare_windows, PreprocessConfig};
pub use resample::{resample, NaturalSpline, TARGET_RATE_HZ};
pub use window::{
    activity_label, expected_window_count, valid_segments, windowize, LabelRule, Window, WindowConfig, WindowLabel, FOG_TAIL_START,
    WINDOW_HOP, WINDOW_LEN,
};
