use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor_nn::ops::{apply_mask, dropout_mask, relu_backward_inplace, relu_inplace, softmax_rows_inplace};
use crate::tensor_nn::{
    join, maxpool2, maxpool2_backward, Conv1d, ConvCache, Float, Linear, Lstm, LstmCache, Param, Parameterized,
    Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    pub in_channels: usize,
    pub seq_len: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            in_channels: 9,
            seq_len: 128,
            conv1_filters: 32,
            conv2_filters: 64,
            kernel: 12,
            lstm_hidden: 64,
            lstm_layers: 2,
            dropout: 0.5,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len / 2 < self.kernel || !self.seq_len.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "trigger seq_len {} must be a multiple of 4 with seq_len/2 ≥ kernel {}",
                self.seq_len, self.kernel
            )));
        }
        if self.lstm_layers == 0 || self.lstm_hidden == 0 || self.conv1_filters == 0 || self.conv2_filters == 0 {
            return Err(Error::Config("trigger dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Time steps reaching the LSTM after two width-2 pools.
    pub fn pooled_len(&self) -> usize {
        self.seq_len / 4
    }
}

/// Class 0 = ambulatory, class 1 = sedentary.
pub const AMBULATORY: usize = 0;

/// conv → ReLU → pool → conv → ReLU → pool → dropout → LSTM → linear.
#[derive(Debug, Clone)]
pub struct TriggerModel<F> {
    pub config: TriggerConfig,
    pub conv1: Conv1d<F>,
    pub conv2: Conv1d<F>,
    pub lstm: Lstm<F>,
    pub fc: Linear<F>,
}

#[derive(Debug, Clone)]
pub struct TriggerCache<F> {
    batch: usize,
    c1: ConvCache<F>,
    a1: Vec<F>,
    arg1: Vec<usize>,
    c2: ConvCache<F>,
    a2: Vec<F>,
    arg2: Vec<usize>,
    drop: Option<Vec<F>>,
    lstm: Vec<LstmCache<F>>,
    last: Vec<F>,
}

/// `[B × T × C]` ↔ `[B × C × T]`.
fn transpose_bt<F: Float>(x: &[F], batch: usize, rows: usize, cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for b in 0..batch {
        let (src, dst) = (&x[b * rows * cols..][..rows * cols], &mut out[b * rows * cols..][..rows * cols]);
        for r in 0..rows {
            for c in 0..cols {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
    }
    out
}

impl<F: Float> TriggerModel<F> {
    pub fn new(config: TriggerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::child(seed, &[rng::tag("trigger-init")]);
        Ok(TriggerModel {
            config,
            conv1: Conv1d::new(config.in_channels, config.conv1_filters, config.kernel, &mut r),
            conv2: Conv1d::new(config.conv1_filters, config.conv2_filters, config.kernel, &mut r),
            lstm: Lstm::new(config.conv2_filters, config.lstm_hidden, config.lstm_layers, &mut r),
            fc: Linear::new(config.lstm_hidden, 2, &mut r),
        })
    }

    /// Logits `[B × 2]` for windows `[B × T × C]`; `rng` enables dropout.
    pub fn forward(&self, x: &[F], batch: usize, rng: Option<&mut Rng>) -> Result<(Vec<F>, TriggerCache<F>)> {
        let cfg = &self.config;
        let (t, c) = (cfg.seq_len, cfg.in_channels);
        if x.len() != batch * t * c {
            return Err(Error::Shape(format!(
                "trigger expects batch {batch} of [{t} × {c}], got {} values",
                x.len()
            )));
        }
        let xt = transpose_bt(x, batch, t, c);
        let (mut a1, c1) = self.conv1.forward_raw(&xt, batch, t)?;
        relu_inplace(&mut a1);
        let (p1, arg1) = maxpool2(&a1, batch * cfg.conv1_filters, t);
        let (mut a2, c2) = self.conv2.forward_raw(&p1, batch, t / 2)?;
        relu_inplace(&mut a2);
        let (mut p2, arg2) = maxpool2(&a2, batch * cfg.conv2_filters, t / 2);
        let drop = dropout_mask(p2.len(), cfg.dropout, rng);
        apply_mask(&mut p2, drop.as_ref());
        let tp = cfg.pooled_len();
        let seq = transpose_bt(&p2, batch, cfg.conv2_filters, tp);
        let lstm = self.lstm.forward_rows(&seq, batch, tp)?;
        let h = cfg.lstm_hidden;
        let top = &lstm.last().expect("at least one layer").outputs;
        let last: Vec<F> = (0..batch).flat_map(|b| top[(b * tp + tp - 1) * h..][..h].to_vec()).collect();
        let logits = self.fc.forward_rows(&last, batch);
        Ok((
            logits,
            TriggerCache {
                batch,
                c1,
                a1,
                arg1,
                c2,
                a2,
                arg2,
                drop,
                lstm,
                last,
            },
        ))
    }

    pub fn backward(&mut self, cache: &TriggerCache<F>, d_logits: &[F]) -> Vec<F> {
        let cfg = self.config;
        let (b, h, tp) = (cache.batch, cfg.lstm_hidden, cfg.pooled_len());
        let d_last = self.fc.backward_rows(&cache.last, d_logits, b);
        let mut d_top = vec![F::zero(); b * tp * h];
        for bi in 0..b {
            d_top[(bi * tp + tp - 1) * h..][..h].copy_from_slice(&d_last[bi * h..][..h]);
        }
        let d_seq = self.lstm.backward_rows(&cache.lstm, &d_top);
        let mut d_p2 = transpose_bt(&d_seq, b, tp, cfg.conv2_filters);
        apply_mask(&mut d_p2, cache.drop.as_ref());
        let mut d_a2 = maxpool2_backward(&cache.arg2, &d_p2, cache.a2.len());
        relu_backward_inplace(&cache.a2, &mut d_a2);
        let d_p1 = self.conv2.backward_raw(&cache.c2, &d_a2);
        let mut d_a1 = maxpool2_backward(&cache.arg1, &d_p1, cache.a1.len());
        relu_backward_inplace(&cache.a1, &mut d_a1);
        let dxt = self.conv1.backward_raw(&cache.c1, &d_a1);
        transpose_bt(&dxt, b, cfg.in_channels, cfg.seq_len)
    }

    /// Eval-mode probabilities `[B × 2]` over (ambulatory, sedentary).
    pub fn predict_proba(&self, x: &[F], batch: usize) -> Result<Vec<F>> {
        let (mut p, _) = self.forward(x, batch, None)?;
        softmax_rows_inplace(&mut p, 2);
        Ok(p)
    }

    pub fn trigger_forward(&self, windows: &Tensor<F>) -> Result<Tensor<F>> {
        let b = match *windows.shape() {
            [b, t, c] if t == self.config.seq_len && c == self.config.in_channels => b,
            _ => return Err(Error::Shape(format!("trigger input {:?}", windows.shape()))),
        };
        Tensor::from_vec(&[b, 2], self.predict_proba(windows.data(), b)?)
    }
}

impl<F: Float> Parameterized<F> for TriggerModel<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        self.conv1.visit_params(&join(prefix, "conv1"), out);
        self.conv2.visit_params(&join(prefix, "conv2"), out);
        self.lstm.visit_params(&join(prefix, "lstm"), out);
        self.fc.visit_params(&join(prefix, "fc"), out);
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        self.conv1.visit_params_mut(&join(prefix, "conv1"), out);
        self.conv2.visit_params_mut(&join(prefix, "conv2"), out);
        self.lstm.visit_params_mut(&join(prefix, "lstm"), out);
        self.fc.visit_params_mut(&join(prefix, "fc"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn rows_sum_to_one_and_eval_is_deterministic() {
        let m = TriggerModel::<f32>::new(TriggerConfig::default(), 0).unwrap();
        let mut r = rng::rng(1);
        let x: Vec<f32> = (0..2 * 128 * 9).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = m.predict_proba(&x, 2).unwrap();
        assert_eq!(a, m.predict_proba(&x, 2).unwrap());
        for row in a.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
        }
        assert_eq!(TriggerConfig::default().pooled_len(), 32);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let m = TriggerModel::<f32>::new(TriggerConfig::default(), 0).unwrap();
        assert!(matches!(m.forward(&[0.0; 10], 1, None), Err(Error::Shape(_))));
    }

    #[test]
    fn parameter_count() {
        let m = TriggerModel::<f32>::new(TriggerConfig::default(), 0).unwrap();
        let expected = (9 * 32 * 12 + 32) + (32 * 64 * 12 + 64) + 2 * (64 * 256 + 64 * 256 + 256) + (64 * 2 + 2);
        assert_eq!(m.param_count(), expected);
    }
}
