//! The FM-FoG transformer, the CNN-LSTM activity trigger, masking and
//! checkpoint files.

mod checkpoint;
mod fm;
pub mod gradcheck;
mod mask;
mod trigger;

pub use checkpoint::{
    from_checkpoint, from_checkpoint_expect, load_any, load_checkpoint, read_checkpoint, save_checkpoint,
    to_checkpoint, AnyModel, Checkpoint, Checkpointable, CKPT_MAGIC, CKPT_VERSION, META_PREFIX,
};
pub use fm::{FmCache, FmFogConfig, FmFogModel, N_CLASSES};
pub use mask::make_mask;
pub use trigger::{TriggerCache, TriggerConfig, TriggerModel, AMBULATORY};

use crate::tensor_nn::{Float, Parameterized};

/// Trainable scalar count.
pub fn param_count<F: Float, M: Parameterized<F>>(model: &M) -> usize {
    model.param_count()
}
