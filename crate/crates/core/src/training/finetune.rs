use serde::{Deserialize, Serialize};

use super::batch::{assemble, epoch_order};
use super::metrics::Metrics;
use crate::error::{Error, Result};
use crate::models::{FmFogModel, TriggerModel, N_CLASSES};
use crate::preprocess::{augment, AugmentConfig, Window};
use crate::rng;
use crate::tensor_nn::ops::softmax_rows_inplace;
use crate::tensor_nn::{cross_entropy, AdamW, AdamWConfig, Float, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub backbone_lr: f64,
    pub head_lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a new best training loss.
    pub patience: usize,
    pub augment: AugmentConfig,
    pub context_enabled: bool,
    pub class_weights: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            backbone_lr: 1e-4,
            head_lr: 1e-3,
            weight_decay: 0.01,
            batch: 32,
            epochs: 20,
            patience: 5,
            augment: AugmentConfig::default(),
            context_enabled: true,
            class_weights: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneHistory {
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

/// Loss plateau detector shared by both fine-tuning loops.
struct EarlyStop {
    best: f64,
    since: usize,
    patience: usize,
}

impl EarlyStop {
    fn new(patience: usize) -> Self {
        EarlyStop {
            best: f64::INFINITY,
            since: 0,
            patience,
        }
    }

    fn should_stop(&mut self, loss: f64) -> bool {
        if loss < self.best - 1e-6 {
            self.best = loss;
            self.since = 0;
        } else {
            self.since += 1;
        }
        self.patience > 0 && self.since >= self.patience
    }
}

fn class_warning(labels: impl Iterator<Item = usize>) -> Option<String> {
    let mut seen = [false; 2];
    for l in labels {
        seen[l.min(1)] = true;
    }
    (!(seen[0] && seen[1])).then(|| "training set contains a single class".to_string())
}

/// Group assignment for the foundation model: `Some(true)` head,
/// `Some(false)` backbone, `None` frozen (unused on the classification path).
fn fm_group(name: &str, context: bool) -> Option<bool> {
    if name.starts_with("cls_head.") {
        Some(true)
    } else if name.starts_with("recon_head.") || name == "mask_token" || (!context && name == "location_table") {
        None
    } else {
        Some(false)
    }
}

/// Supervised FoG fine-tuning with a fresh head, differential learning
/// rates and train-time augmentation.
pub fn finetune<F: Float>(model: &mut FmFogModel<F>, windows: &[Window], cfg: &FinetuneConfig) -> Result<FinetuneHistory> {
    if !(cfg.backbone_lr > 0.0 && cfg.head_lr > 0.0) || cfg.batch == 0 {
        return Err(Error::Config("fine-tuning needs positive learning rates and batch".into()));
    }
    model.reset_head(cfg.seed);
    model.context_enabled = cfg.context_enabled;
    let mut history = FinetuneHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    if windows.is_empty() {
        return Err(Error::Config("fine-tuning set is empty".into()));
    }
    history.warnings.extend(class_warning(windows.iter().map(|w| w.label.fog_class())));
    let mut opt = AdamW::<F>::new(AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });
    let mut stop = EarlyStop::new(cfg.patience);
    let cw = cfg.class_weights.map(|w| w.to_vec());
    for epoch in 0..cfg.epochs {
        let order = epoch_order(windows.len(), cfg.seed, epoch);
        let (mut sum, mut correct) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let aug: Vec<Window> = chunk
                .iter()
                .map(|&i| augment(&windows[i], &cfg.augment, rng::derive(cfg.seed, &[rng::tag("aug"), epoch as u64, i as u64])))
                .collect();
            let batch = assemble::<F>(&aug);
            let labels: Vec<usize> = aug.iter().map(|w| w.label.fog_class()).collect();
            let mut drop_rng = rng::child(cfg.seed, &[rng::tag("ft-dropout"), epoch as u64, bi as u64]);
            let (logits, cache) = model.forward_classify(&batch.x, &batch.locs, batch.len, Some(&mut drop_rng))?;
            let logits = Tensor::from_vec(&[batch.len, N_CLASSES], logits)?;
            let (loss, grad, probs) = cross_entropy(&logits, &labels, cw.as_deref())?;
            correct += argmax_rows(probs.data()).iter().zip(&labels).filter(|(a, b)| a == b).count();
            model.zero_grad();
            model.backward_classify(&cache, grad.data());
            let ctx = cfg.context_enabled;
            let mut params: Vec<_> = model
                .params_mut()
                .into_iter()
                .filter_map(|(n, p)| fm_group(&n, ctx).map(|head| (p, if head { cfg.head_lr } else { cfg.backbone_lr })))
                .collect();
            opt.step(&mut params);
            sum += loss.as_f64() * batch.len as f64;
        }
        let loss = sum / windows.len() as f64;
        history.epoch_loss.push(loss);
        history.epoch_accuracy.push(correct as f64 / windows.len() as f64);
        if stop.should_stop(loss) && epoch + 1 < cfg.epochs {
            history.stopped_early = true;
            break;
        }
    }
    Ok(history)
}

pub(crate) fn argmax_rows<F: Float>(p: &[F]) -> Vec<usize> {
    p.chunks_exact(N_CLASSES)
        .map(|r| usize::from(r[1] > r[0]))
        .collect()
}

/// FM fog probabilities for each window (eval mode, no augmentation).
pub fn predict_fog<F: Float>(model: &FmFogModel<F>, windows: &[Window]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(64) {
        let b = assemble::<F>(chunk);
        let p = model.predict_proba(&b.x, &b.locs, b.len)?;
        out.extend(p.chunks_exact(N_CLASSES).map(|r| r[1].as_f64()));
    }
    Ok(out)
}

/// Argmax FoG metrics.
pub fn evaluate<F: Float>(model: &FmFogModel<F>, windows: &[Window]) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let p = predict_fog(model, windows)?;
    let pred: Vec<usize> = p.iter().map(|&v| usize::from(v > 0.5)).collect();
    let truth: Vec<usize> = windows.iter().map(|w| w.label.fog_class()).collect();
    Metrics::from_predictions(&truth, &pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerTrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub patience: usize,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TriggerTrainConfig {
    fn default() -> Self {
        TriggerTrainConfig {
            lr: 1e-3,
            weight_decay: 0.01,
            batch: 32,
            epochs: 10,
            patience: 5,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

/// Supervised training of the ambulatory/sedentary trigger.
pub fn train_trigger<F: Float>(
    model: &mut TriggerModel<F>,
    windows: &[Window],
    cfg: &TriggerTrainConfig,
) -> Result<FinetuneHistory> {
    if windows.is_empty() {
        return Err(Error::Config("trigger training set is empty".into()));
    }
    let mut history = FinetuneHistory::default();
    history.warnings.extend(class_warning(windows.iter().map(|w| w.label.trigger_class())));
    let mut opt = AdamW::<F>::new(AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });
    let mut stop = EarlyStop::new(cfg.patience);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(windows.len(), cfg.seed, epoch);
        let (mut sum, mut correct) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch.max(1)).enumerate() {
            let aug: Vec<Window> = chunk
                .iter()
                .map(|&i| augment(&windows[i], &cfg.augment, rng::derive(cfg.seed, &[rng::tag("trig-aug"), epoch as u64, i as u64])))
                .collect();
            let batch = assemble::<F>(&aug);
            let labels: Vec<usize> = aug.iter().map(|w| w.label.trigger_class()).collect();
            let mut drop_rng = rng::child(cfg.seed, &[rng::tag("trig-dropout"), epoch as u64, bi as u64]);
            let (logits, cache) = model.forward(&batch.x, batch.len, Some(&mut drop_rng))?;
            let logits = Tensor::from_vec(&[batch.len, 2], logits)?;
            let (loss, grad, probs) = cross_entropy(&logits, &labels, None)?;
            correct += argmax_rows(probs.data()).iter().zip(&labels).filter(|(a, b)| a == b).count();
            model.zero_grad();
            model.backward(&cache, grad.data());
            let mut params: Vec<_> = model.params_mut().into_iter().map(|(_, p)| (p, cfg.lr)).collect();
            opt.step(&mut params);
            sum += loss.as_f64() * batch.len as f64;
        }
        let loss = sum / windows.len() as f64;
        history.epoch_loss.push(loss);
        history.epoch_accuracy.push(correct as f64 / windows.len() as f64);
        if stop.should_stop(loss) && epoch + 1 < cfg.epochs {
            history.stopped_early = true;
            break;
        }
    }
    Ok(history)
}

/// Trigger accuracy with "sedentary" (class 1) as the positive class.
pub fn evaluate_trigger<F: Float>(model: &TriggerModel<F>, windows: &[Window]) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let mut pred = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(64) {
        let b = assemble::<F>(chunk);
        let (mut p, _) = model.forward(&b.x, b.len, None)?;
        softmax_rows_inplace(&mut p, 2);
        pred.extend(argmax_rows(&p));
    }
    let truth: Vec<usize> = windows.iter().map(|w| w.label.trigger_class()).collect();
    Metrics::from_predictions(&truth, &pred)
}
