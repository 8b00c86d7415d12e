//! Shared inputs for the benchmarks.

use fmfog::imu_data::{ambulatory_schedule, synth_gait, SensorLocation, SensorSite, SensorStream, Side, SynthParams};
use fmfog::preprocess::{prepare_windows, PreprocessConfig, Window};

/// A single ankle stream, half ambulatory.
pub fn ankle_stream(seconds: f64, seed: u64) -> SensorStream {
    let loc = SensorLocation::new(SensorSite::Ankle, Side::Left);
    let params = SynthParams::new("bench", loc, ambulatory_schedule(seconds, 0.5, 0.2, 3));
    synth_gait(&params, seed).expect("synthetic stream")
}

pub fn windows(seconds: f64, seed: u64) -> Vec<Window> {
    prepare_windows(&[ankle_stream(seconds, seed)], &PreprocessConfig::default())
        .expect("windows")
        .0
}

#[cfg(test)]
mod tests {
    #[test]
    fn inputs_are_nonempty() {
        assert!(!super::windows(10.0, 1).is_empty());
    }
}
