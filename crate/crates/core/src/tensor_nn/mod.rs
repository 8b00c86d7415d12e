//! Deterministic forward/backward kernels for the two models: dense
//! layers, layer norm, multi-head attention, 1-D convolution with pooling,
//! stacked LSTM, embeddings, losses, AdamW and a finite-difference checker.
//!
//! Layers work on flat row-major buffers (`*_rows` / `*_raw` methods) with
//! explicit caches; the `Tensor` wrappers exist for the public surface and
//! tests.

mod attention;
mod conv;
mod embed;
mod float;
pub mod gradcheck;
pub mod init;
mod linear;
mod loss;
mod lstm;
mod norm;
pub mod ops;
mod optim;
mod tensor;

pub use attention::{AttentionCache, BlockCache, FeedForward, MultiHeadAttention, TransformerBlock};
pub use conv::{maxpool2, maxpool2_backward, Conv1d, ConvCache};
pub use embed::{embedding_table, location_embed, location_embed_backward, sinusoidal_positional};
pub use float::{matmul, Float};
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use linear::Linear;
pub use loss::{cross_entropy, masked_mse};
pub use lstm::{Lstm, LstmCache, LstmLayer};
pub use norm::{LayerNorm, LayerNormCache};
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use tensor::{join, Param, Parameterized, Tensor};
