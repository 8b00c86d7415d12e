//! Whole-model finite-difference checks at tiny dimensions.

use rand::Rng as _;

use super::{make_mask, FmFogConfig, FmFogModel, TriggerConfig, TriggerModel};
use crate::error::Result;
use crate::rng;
use crate::tensor_nn::gradcheck::{grad_check, layers::ATTENTION_TOL, layers::RECURRENT_TOL, GradCheckReport};
use crate::tensor_nn::Tensor;

pub fn tiny_fm_config() -> FmFogConfig {
    FmFogConfig {
        d_model: 8,
        n_blocks: 2,
        n_heads: 2,
        d_ff: 12,
        seq_len: 5,
        in_channels: 4,
        n_locations: 3,
        mask_ratio: 0.4,
        dropout: 0.1,
    }
}

pub fn tiny_trigger_config() -> TriggerConfig {
    TriggerConfig {
        in_channels: 3,
        seq_len: 16,
        conv1_filters: 3,
        conv2_filters: 4,
        kernel: 3,
        lstm_hidden: 3,
        lstm_layers: 2,
        dropout: 0.5,
    }
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::rng(seed);
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

fn perturb_biases(model: &mut impl crate::tensor_nn::Parameterized<f64>, seed: u64) {
    let mut r = rng::rng(seed);
    for (name, p) in model.params_mut() {
        if name.ends_with("bias") || name.ends_with("beta") || name.ends_with("gamma") {
            for v in p.value.data_mut() {
                *v += r.random_range(-0.3..0.3);
            }
        }
    }
}

/// Masked-reconstruction path of the foundation model.
pub fn fm_pretrain(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_fm_config();
    let mut m = FmFogModel::<f64>::new(cfg, seed)?;
    perturb_biases(&mut m, seed ^ 7);
    let batch = 2;
    let x = random(&[batch, cfg.seq_len, cfg.in_channels], seed ^ 1);
    let locs = [0usize, 2];
    let mut mask = make_mask(cfg.seq_len, cfg.mask_ratio, seed);
    mask.extend(make_mask(cfg.seq_len, cfg.mask_ratio, seed + 1));
    grad_check("fm_pretrain", &mut m, &x, ATTENTION_TOL, 24, seed ^ 2, |m, x, up| {
        let (y, cache) = m.forward_pretrain(x.data(), &locs, &mask, batch, None)?;
        let dx = match up {
            Some(up) => Some(Tensor::from_vec(x.shape(), m.backward_pretrain(&cache, up.data()))?),
            None => None,
        };
        Ok((Tensor::from_vec(x.shape(), y)?, dx))
    })
}

/// Pooled classification path of the foundation model.
pub fn fm_classify(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_fm_config();
    let mut m = FmFogModel::<f64>::new(cfg, seed)?;
    perturb_biases(&mut m, seed ^ 7);
    let mut r = rng::rng(seed ^ 9);
    for v in m.cls_head.weight.value.data_mut() {
        *v = r.random_range(-0.5..0.5);
    }
    let batch = 2;
    let x = random(&[batch, cfg.seq_len, cfg.in_channels], seed ^ 1);
    let locs = [1usize, 2];
    grad_check("fm_classify", &mut m, &x, ATTENTION_TOL, 24, seed ^ 2, |m, x, up| {
        let (y, cache) = m.forward_classify(x.data(), &locs, batch, None)?;
        let dx = match up {
            Some(up) => Some(Tensor::from_vec(x.shape(), m.backward_classify(&cache, up.data()))?),
            None => None,
        };
        Ok((Tensor::from_vec(&[batch, 2], y)?, dx))
    })
}

pub fn trigger(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_trigger_config();
    let mut m = TriggerModel::<f64>::new(cfg, seed)?;
    perturb_biases(&mut m, seed ^ 7);
    let batch = 2;
    let x = random(&[batch, cfg.seq_len, cfg.in_channels], seed ^ 1);
    grad_check("trigger", &mut m, &x, RECURRENT_TOL, 24, seed ^ 2, |m, x, up| {
        let (y, cache) = m.forward(x.data(), batch, None)?;
        let dx = match up {
            Some(up) => Some(Tensor::from_vec(x.shape(), m.backward(&cache, up.data()))?),
            None => None,
        };
        Ok((Tensor::from_vec(&[batch, 2], y)?, dx))
    })
}

/// Every layer-level and whole-model check, in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<GradCheckReport>> {
    use crate::tensor_nn::gradcheck::layers;
    Ok(vec![
        layers::linear(seed)?,
        layers::conv_relu_pool(seed + 1)?,
        layers::lstm(seed + 2)?,
        layers::transformer_block(seed + 3)?,
        fm_pretrain(seed + 4)?,
        fm_classify(seed + 5)?,
        trigger(seed + 6)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_models_pass() {
        for report in [fm_pretrain(3).unwrap(), fm_classify(4).unwrap(), trigger(5).unwrap()] {
            assert!(report.passed(), "{}: {:?}", report.module, report.offending());
        }
    }
}
