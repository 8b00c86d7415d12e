use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor_nn::ops::softmax_rows_inplace;
use crate::tensor_nn::{
    embedding_table, init, location_embed, location_embed_backward, sinusoidal_positional, BlockCache, Float,
    Linear, Param, Parameterized, Tensor, TransformerBlock,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FmFogConfig {
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub seq_len: usize,
    pub in_channels: usize,
    pub n_locations: usize,
    pub mask_ratio: f64,
    pub dropout: f64,
}

impl Default for FmFogConfig {
    fn default() -> Self {
        FmFogConfig {
            d_model: 128,
            n_blocks: 6,
            n_heads: 8,
            d_ff: 512,
            seq_len: 128,
            in_channels: 9,
            n_locations: 6,
            mask_ratio: 0.30,
            dropout: 0.1,
        }
    }
}

impl FmFogConfig {
    /// Reduced width and depth for single-core experiments.
    pub fn desk() -> Self {
        FmFogConfig {
            d_model: 32,
            n_blocks: 2,
            n_heads: 4,
            d_ff: 64,
            ..FmFogConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!("mask_ratio {} not in (0, 1)", self.mask_ratio)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.seq_len == 0 || self.in_channels == 0 || self.n_locations == 0 || self.d_ff == 0 {
            return Err(Error::Config("FM dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Masked-reconstruction transformer with a pooled classification head.
#[derive(Debug, Clone)]
pub struct FmFogModel<F> {
    pub config: FmFogConfig,
    /// When false the location embedding contributes zeros.
    pub context_enabled: bool,
    pub input_proj: Linear<F>,
    pub mask_token: Param<F>,
    pub location_table: Param<F>,
    pub blocks: Vec<TransformerBlock<F>>,
    pub recon_head: Linear<F>,
    pub cls_head: Linear<F>,
    positional: Tensor<F>,
}

#[derive(Debug, Clone)]
pub struct FmCache<F> {
    pub batch: usize,
    x: Vec<F>,
    mask: Option<Vec<bool>>,
    locs: Vec<usize>,
    pub blocks: Vec<BlockCache<F>>,
    h: Vec<F>,
    pooled: Vec<F>,
}

impl<F> FmCache<F> {
    /// Mean-pooled encoder output `[B × D]` (classification path only).
    pub fn pooled(&self) -> &[F] {
        &self.pooled
    }
}

pub const N_CLASSES: usize = 2;

impl<F: Float> FmFogModel<F> {
    pub fn new(config: FmFogConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::child(seed, &[rng::tag("fmfog-init")]);
        let (d, c) = (config.d_model, config.in_channels);
        let input_proj = Linear::new(c, d, &mut r);
        let mask_token = Param::new(init::normal(&[d], 0.02, &mut r));
        let location_table = embedding_table(config.n_locations, d, &mut r);
        let blocks = (0..config.n_blocks)
            .map(|_| TransformerBlock::new(d, config.n_heads, config.d_ff, config.dropout, &mut r))
            .collect::<Result<Vec<_>>>()?;
        let recon_head = Linear::new(d, c, &mut r);
        let mut model = FmFogModel {
            config,
            context_enabled: true,
            input_proj,
            mask_token,
            location_table,
            blocks,
            recon_head,
            cls_head: Linear::new(d, N_CLASSES, &mut r),
            positional: sinusoidal_positional(config.seq_len, d),
        };
        model.reset_head(seed);
        Ok(model)
    }

    /// Fresh classification head: small normal weights, zero bias.
    pub fn reset_head(&mut self, seed: u64) {
        let mut r = rng::child(seed, &[rng::tag("fmfog-head")]);
        self.cls_head.weight = Param::new(init::normal(&[self.config.d_model, N_CLASSES], 0.02, &mut r));
        self.cls_head.bias = Param::zeros(&[N_CLASSES]);
    }

    fn check_inputs(&self, x: &[F], locs: &[usize], mask: Option<&[bool]>, batch: usize) -> Result<()> {
        let (t, c) = (self.config.seq_len, self.config.in_channels);
        if x.len() != batch * t * c || locs.len() != batch {
            return Err(Error::Shape(format!(
                "FM input: {} values and {} location ids for batch {batch} of [{t} × {c}]",
                x.len(),
                locs.len()
            )));
        }
        if let Some(m) = mask {
            if m.len() != batch * t {
                return Err(Error::Shape(format!("mask has {} entries, expected {}", m.len(), batch * t)));
            }
        }
        for &l in locs {
            location_embed(l, &self.location_table)?;
        }
        Ok(())
    }

    /// Activations entering block 1: projection (mask token at masked
    /// rows) plus location embedding plus positional encoding.
    pub fn embed(&self, x: &[F], locs: &[usize], mask: Option<&[bool]>, batch: usize) -> Result<Vec<F>> {
        self.check_inputs(x, locs, mask, batch)?;
        let (t, d) = (self.config.seq_len, self.config.d_model);
        let mut e = self.input_proj.forward_rows(x, batch * t);
        let pos = self.positional.data();
        for b in 0..batch {
            let loc = location_embed(locs[b], &self.location_table)?;
            for ti in 0..t {
                let row = &mut e[(b * t + ti) * d..][..d];
                if mask.is_some_and(|m| m[b * t + ti]) {
                    row.copy_from_slice(self.mask_token.value.data());
                }
                for (j, v) in row.iter_mut().enumerate() {
                    *v += pos[ti * d + j];
                    if self.context_enabled {
                        *v += loc[j];
                    }
                }
            }
        }
        Ok(e)
    }

    fn encode(
        &self,
        x: &[F],
        locs: &[usize],
        mask: Option<&[bool]>,
        batch: usize,
        mut rng: Option<&mut Rng>,
    ) -> Result<FmCache<F>> {
        let mut h = self.embed(x, locs, mask, batch)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward_rows(&h, batch, self.config.seq_len, rng.as_deref_mut());
            caches.push(cache);
            h = y;
        }
        Ok(FmCache {
            batch,
            x: x.to_vec(),
            mask: mask.map(<[bool]>::to_vec),
            locs: locs.to_vec(),
            blocks: caches,
            h,
            pooled: Vec::new(),
        })
    }

    fn backward_encoder(&mut self, cache: &FmCache<F>, dh: Vec<F>) -> Vec<F> {
        let (t, d) = (self.config.seq_len, self.config.d_model);
        let rows = cache.batch * t;
        let mut g = dh;
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = block.backward_rows(bc, &g);
        }
        for b in 0..cache.batch {
            let mut loc_grad = vec![F::zero(); d];
            for ti in 0..t {
                let r = b * t + ti;
                let row = &mut g[r * d..][..d];
                if self.context_enabled {
                    for (a, &v) in loc_grad.iter_mut().zip(row.iter()) {
                        *a += v;
                    }
                }
                if cache.mask.as_ref().is_some_and(|m| m[r]) {
                    for (a, v) in self.mask_token.grad.data_mut().iter_mut().zip(row.iter_mut()) {
                        *a += *v;
                        *v = F::zero();
                    }
                }
            }
            if self.context_enabled {
                location_embed_backward(cache.locs[b], &mut self.location_table, &loc_grad);
            }
        }
        self.input_proj.accumulate_grads(&cache.x, &g, rows);
        self.input_proj.input_grad(&g, rows)
    }

    /// Reconstruction `[B × T × C]`. `rng` enables dropout.
    pub fn forward_pretrain(
        &self,
        x: &[F],
        locs: &[usize],
        mask: &[bool],
        batch: usize,
        rng: Option<&mut Rng>,
    ) -> Result<(Vec<F>, FmCache<F>)> {
        let cache = self.encode(x, locs, Some(mask), batch, rng)?;
        let recon = self.recon_head.forward_rows(&cache.h, batch * self.config.seq_len);
        Ok((recon, cache))
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward_pretrain(&mut self, cache: &FmCache<F>, d_recon: &[F]) -> Vec<F> {
        let rows = cache.batch * self.config.seq_len;
        let dh = self.recon_head.backward_rows(&cache.h, d_recon, rows);
        self.backward_encoder(cache, dh)
    }

    /// Logits `[B × 2]`; no masking on this path.
    pub fn forward_classify(
        &self,
        x: &[F],
        locs: &[usize],
        batch: usize,
        rng: Option<&mut Rng>,
    ) -> Result<(Vec<F>, FmCache<F>)> {
        let mut cache = self.encode(x, locs, None, batch, rng)?;
        let (t, d) = (self.config.seq_len, self.config.d_model);
        let inv = F::of(1.0 / t as f64);
        let mut pooled = vec![F::zero(); batch * d];
        for b in 0..batch {
            let p = &mut pooled[b * d..][..d];
            for row in cache.h[b * t * d..][..t * d].chunks_exact(d) {
                for (a, &v) in p.iter_mut().zip(row) {
                    *a += v;
                }
            }
            p.iter_mut().for_each(|v| *v *= inv);
        }
        let logits = self.cls_head.forward_rows(&pooled, batch);
        cache.pooled = pooled;
        Ok((logits, cache))
    }

    pub fn backward_classify(&mut self, cache: &FmCache<F>, d_logits: &[F]) -> Vec<F> {
        let (t, d) = (self.config.seq_len, self.config.d_model);
        let dp = self.cls_head.backward_rows(&cache.pooled, d_logits, cache.batch);
        let inv = F::of(1.0 / t as f64);
        let mut dh = vec![F::zero(); cache.batch * t * d];
        for b in 0..cache.batch {
            for row in dh[b * t * d..][..t * d].chunks_exact_mut(d) {
                for (a, &g) in row.iter_mut().zip(&dp[b * d..][..d]) {
                    *a = g * inv;
                }
            }
        }
        self.backward_encoder(cache, dh)
    }

    /// Eval-mode class probabilities `[B × 2]`.
    pub fn predict_proba(&self, x: &[F], locs: &[usize], batch: usize) -> Result<Vec<F>> {
        let (mut p, _) = self.forward_classify(x, locs, batch, None)?;
        softmax_rows_inplace(&mut p, N_CLASSES);
        Ok(p)
    }

    fn tensor_batch(&self, windows: &Tensor<F>) -> Result<usize> {
        match *windows.shape() {
            [b, t, c] if t == self.config.seq_len && c == self.config.in_channels => Ok(b),
            _ => Err(Error::Shape(format!(
                "FM expects [B × {} × {}], got {:?}",
                self.config.seq_len,
                self.config.in_channels,
                windows.shape()
            ))),
        }
    }

    /// Eval-mode reconstruction for a `[B × T × C]` batch and `[B × T]` mask.
    pub fn fm_forward_pretrain(&self, windows: &Tensor<F>, locs: &[usize], masks: &[bool]) -> Result<Tensor<F>> {
        let b = self.tensor_batch(windows)?;
        let (recon, _) = self.forward_pretrain(windows.data(), locs, masks, b, None)?;
        Tensor::from_vec(windows.shape(), recon)
    }

    pub fn fm_forward_classify(&self, windows: &Tensor<F>, locs: &[usize]) -> Result<Tensor<F>> {
        let b = self.tensor_batch(windows)?;
        Tensor::from_vec(&[b, N_CLASSES], self.predict_proba(windows.data(), locs, b)?)
    }
}

impl<F: Float> Parameterized<F> for FmFogModel<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        use crate::tensor_nn::join;
        self.input_proj.visit_params(&join(prefix, "input_proj"), out);
        out.push((join(prefix, "mask_token"), &self.mask_token));
        out.push((join(prefix, "location_table"), &self.location_table));
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_params(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.recon_head.visit_params(&join(prefix, "recon_head"), out);
        self.cls_head.visit_params(&join(prefix, "cls_head"), out);
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        use crate::tensor_nn::join;
        self.input_proj.visit_params_mut(&join(prefix, "input_proj"), out);
        out.push((join(prefix, "mask_token"), &mut self.mask_token));
        out.push((join(prefix, "location_table"), &mut self.location_table));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_params_mut(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.recon_head.visit_params_mut(&join(prefix, "recon_head"), out);
        self.cls_head.visit_params_mut(&join(prefix, "cls_head"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn tiny() -> FmFogConfig {
        FmFogConfig {
            d_model: 8,
            n_blocks: 1,
            n_heads: 2,
            d_ff: 16,
            seq_len: 6,
            ..FmFogConfig::default()
        }
    }

    fn input(b: usize, cfg: &FmFogConfig, seed: u64) -> Vec<f32> {
        let mut r = rng::rng(seed);
        (0..b * cfg.seq_len * cfg.in_channels).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn default_parameter_count_is_in_band() {
        let m = FmFogModel::<f32>::new(FmFogConfig::default(), 0).unwrap();
        let n = m.param_count();
        assert!((1_150_000..=1_300_000).contains(&n), "{n}");
    }

    #[test]
    fn heads_must_divide_width() {
        let cfg = FmFogConfig { n_heads: 5, ..tiny() };
        assert!(matches!(FmFogModel::<f32>::new(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn location_changes_embedding_by_row_difference() {
        let cfg = tiny();
        let m = FmFogModel::<f64>::new(cfg, 1).unwrap();
        let x: Vec<f64> = input(1, &cfg, 2).into_iter().map(f64::from).collect();
        let a = m.embed(&x, &[0], None, 1).unwrap();
        let b = m.embed(&x, &[3], None, 1).unwrap();
        let t0 = m.location_table.value.data();
        let d = cfg.d_model;
        for (i, (va, vb)) in a.iter().zip(&b).enumerate() {
            let j = i % d;
            assert!(((vb - va) - (t0[3 * d + j] - t0[j])).abs() < 1e-12);
        }
        assert!(matches!(m.embed(&x, &[6], None, 1), Err(Error::Index(_))));
    }

    #[test]
    fn unmasked_rows_ignore_mask_pattern() {
        let cfg = tiny();
        let m = FmFogModel::<f32>::new(cfg, 1).unwrap();
        let x = input(1, &cfg, 3);
        let m1 = [true, false, false, true, false, false];
        let m2 = [false, false, true, true, false, true];
        let a = m.embed(&x, &[1], Some(&m1), 1).unwrap();
        let b = m.embed(&x, &[1], Some(&m2), 1).unwrap();
        let d = cfg.d_model;
        for t in [1, 4] {
            assert_eq!(a[t * d..][..d], b[t * d..][..d]);
        }
    }

    #[test]
    fn probabilities_are_distributions_and_batch_independent() {
        let cfg = tiny();
        let m = FmFogModel::<f32>::new(cfg, 4).unwrap();
        let x = input(3, &cfg, 5);
        let p = m.predict_proba(&x, &[0, 1, 2], 3).unwrap();
        for row in p.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
            assert!((row[0] - 0.5).abs() < 0.2);
        }
        let n = cfg.seq_len * cfg.in_channels;
        let mut swapped = x[2 * n..].to_vec();
        swapped.extend_from_slice(&x[n..2 * n]);
        swapped.extend_from_slice(&x[..n]);
        let q = m.predict_proba(&swapped, &[2, 1, 0], 3).unwrap();
        let close = |a: &[f32], b: &[f32]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6);
        assert!(close(&q[..2], &p[4..]));
        assert!(close(&q[4..], &p[..2]));
    }

    #[test]
    fn disabled_context_matches_zeroed_table() {
        let cfg = tiny();
        let mut a = FmFogModel::<f32>::new(cfg, 6).unwrap();
        let mut b = a.clone();
        a.context_enabled = false;
        b.location_table.value.fill(0.0);
        let x = input(2, &cfg, 7);
        assert_eq!(a.embed(&x, &[1, 4], None, 2).unwrap(), b.embed(&x, &[1, 4], None, 2).unwrap());
    }
}
