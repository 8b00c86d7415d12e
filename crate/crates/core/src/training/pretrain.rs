use serde::{Deserialize, Serialize};

use super::batch::{assemble, epoch_order, steps_per_epoch};
use crate::error::{Error, Result};
use crate::models::{make_mask, FmFogModel};
use crate::preprocess::{Window, N_CHANNELS};
use crate::rng;
use crate::tensor_nn::{cosine_lr, masked_mse, AdamW, AdamWConfig, Float, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub mask_ratio: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            lr0: 5e-4,
            lr_min: 1e-6,
            weight_decay: 0.01,
            batch: 32,
            epochs: 50,
            mask_ratio: 0.30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainHistory {
    pub epoch_loss: Vec<f64>,
    pub lr_first: f64,
    pub lr_last: f64,
}

/// Masked-reconstruction pretraining. Window labels are ignored.
pub fn pretrain<F: Float>(model: &mut FmFogModel<F>, windows: &[Window], cfg: &PretrainConfig) -> Result<PretrainHistory> {
    if windows.is_empty() {
        return Err(Error::Config("pretraining corpus is empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch == 0 {
        return Err(Error::Config("pretraining needs epochs ≥ 1 and batch ≥ 1".into()));
    }
    let t = model.config.seq_len;
    let per_epoch = steps_per_epoch(windows.len(), cfg.batch);
    let total = (per_epoch * cfg.epochs) as u64;
    let mut opt = AdamW::<F>::new(AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });
    let mut history = PretrainHistory::default();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(windows.len(), cfg.seed, epoch);
        let mut sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let batch = assemble::<F>(chunk.iter().map(|&i| &windows[i]));
            let mut mask = Vec::with_capacity(batch.len * t);
            for &i in chunk {
                mask.extend(make_mask(t, cfg.mask_ratio, rng::derive(cfg.seed, &[epoch as u64, i as u64])));
            }
            let mut drop_rng = rng::child(cfg.seed, &[rng::tag("dropout"), epoch as u64, bi as u64]);
            let (recon, cache) = model.forward_pretrain(&batch.x, &batch.locs, &mask, batch.len, Some(&mut drop_rng))?;
            let shape = [batch.len, t, N_CHANNELS];
            let pred = Tensor::from_vec(&shape, recon)?;
            let target = Tensor::from_vec(&shape, batch.x)?;
            let (loss, grad) = masked_mse(&pred, &target, &mask, &batch.present)?;
            model.zero_grad();
            model.backward_pretrain(&cache, grad.data());
            let lr = cosine_lr(step, total.saturating_sub(1), cfg.lr0, cfg.lr_min);
            if step == 0 {
                history.lr_first = lr;
            }
            history.lr_last = lr;
            let mut params: Vec<_> = model.params_mut().into_iter().map(|(_, p)| (p, lr)).collect();
            opt.step(&mut params);
            sum += loss.as_f64() * batch.len as f64;
            step += 1;
        }
        history.epoch_loss.push(sum / windows.len() as f64);
    }
    Ok(history)
}

/// Held-out reconstruction error of the model against a per-channel-mean
/// predictor fitted on `train`. Masks are drawn from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionEval {
    pub model_mse: f64,
    pub mean_predictor_mse: f64,
}

impl ReconstructionEval {
    pub fn ratio(&self) -> f64 {
        self.model_mse / self.mean_predictor_mse
    }
}

pub fn channel_means(windows: &[Window]) -> [f64; N_CHANNELS] {
    let mut sum = [0.0; N_CHANNELS];
    let mut n = [0u64; N_CHANNELS];
    for w in windows {
        for row in w.values.chunks_exact(N_CHANNELS) {
            for c in (0..N_CHANNELS).filter(|&c| w.present_mask[c]) {
                sum[c] += row[c] as f64;
                n[c] += 1;
            }
        }
    }
    std::array::from_fn(|c| if n[c] == 0 { 0.0 } else { sum[c] / n[c] as f64 })
}

pub fn evaluate_reconstruction<F: Float>(
    model: &FmFogModel<F>,
    train: &[Window],
    held_out: &[Window],
    mask_ratio: f64,
    seed: u64,
) -> Result<ReconstructionEval> {
    if held_out.is_empty() {
        return Err(Error::Config("no held-out windows".into()));
    }
    let means = channel_means(train);
    let t = model.config.seq_len;
    let (mut se_model, mut se_mean, mut count) = (0.0, 0.0, 0u64);
    for (ci, chunk) in held_out.chunks(32).enumerate() {
        let batch = assemble::<F>(chunk);
        let mut mask = Vec::with_capacity(batch.len * t);
        for i in 0..chunk.len() {
            mask.extend(make_mask(t, mask_ratio, rng::derive(seed, &[ci as u64, i as u64])));
        }
        let (recon, _) = model.forward_pretrain(&batch.x, &batch.locs, &mask, batch.len, None)?;
        for (b, w) in chunk.iter().enumerate() {
            for ti in (0..t).filter(|&ti| mask[b * t + ti]) {
                for c in (0..N_CHANNELS).filter(|&c| w.present_mask[c]) {
                    let i = (b * t + ti) * N_CHANNELS + c;
                    let y = w.values[ti * N_CHANNELS + c] as f64;
                    se_model += (recon[i].as_f64() - y).powi(2);
                    se_mean += (means[c] - y).powi(2);
                    count += 1;
                }
            }
        }
    }
    Ok(ReconstructionEval {
        model_mse: se_model / count as f64,
        mean_predictor_mse: se_mean / count as f64,
    })
}
