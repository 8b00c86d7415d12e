//! Event-triggered freezing-of-gait detection: IMU harmonization, a
//! masked-reconstruction transformer with sensor-location context, a
//! CNN-LSTM activity trigger, a streaming runtime and a duty-cycle energy
//! model.

// `!(x > 0.0)` is the NaN-rejecting form used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod imu_data;
pub mod models;
pub mod preprocess;
pub mod rng;
pub mod runtime;
pub mod tensor_nn;
pub mod training;

pub use error::{Error, Result};
