use super::norm::LayerNormCache;
use super::ops::{apply_mask, dropout_mask, relu_backward_inplace, relu_inplace, softmax_rows_inplace};
use super::tensor::join;
use super::{Float, LayerNorm, Linear, Param, Parameterized};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Multi-head scaled dot-product self-attention over `[B × T × D]` rows.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention<F> {
    pub heads: usize,
    pub wq: Linear<F>,
    pub wk: Linear<F>,
    pub wv: Linear<F>,
    pub wo: Linear<F>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<F> {
    x: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// Softmax weights `[B × heads × T × T]`.
    pub probs: Vec<F>,
    ctx: Vec<F>,
    batch: usize,
    seq: usize,
}

impl<F: Float> MultiHeadAttention<F> {
    pub fn new(dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "model dimension {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            heads,
            wq: Linear::new(dim, dim, rng),
            wk: Linear::new(dim, dim, rng),
            wv: Linear::new(dim, dim, rng),
            wo: Linear::new(dim, dim, rng),
        })
    }

    pub fn dim(&self) -> usize {
        self.wq.d_in()
    }

    fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn forward_rows(&self, x: &[F], batch: usize, seq: usize) -> (Vec<F>, AttentionCache<F>) {
        let d = self.dim();
        let dh = self.head_dim();
        let rows = batch * seq;
        let q = self.wq.forward_rows(x, rows);
        let k = self.wk.forward_rows(x, rows);
        let v = self.wv.forward_rows(x, rows);
        let scale = F::of(1.0 / (dh as f64).sqrt());
        let mut probs = vec![F::zero(); batch * self.heads * seq * seq];
        let mut ctx = vec![F::zero(); rows * d];
        for b in 0..batch {
            let base = b * seq * d;
            for h in 0..self.heads {
                let off = base + h * dh;
                let p = &mut probs[(b * self.heads + h) * seq * seq..][..seq * seq];
                // scores = Q_h · K_h^T · scale
                F::gemm(seq, dh, seq, scale, &q[off..], d, 1, &k[off..], 1, d, F::zero(), p, seq, 1);
                softmax_rows_inplace(p, seq);
                F::gemm(seq, seq, dh, F::one(), p, seq, 1, &v[off..], d, 1, F::zero(), &mut ctx[off..], d, 1);
            }
        }
        let out = self.wo.forward_rows(&ctx, rows);
        (
            out,
            AttentionCache {
                x: x.to_vec(),
                q,
                k,
                v,
                probs,
                ctx,
                batch,
                seq,
            },
        )
    }

    pub fn backward_rows(&mut self, cache: &AttentionCache<F>, dout: &[F]) -> Vec<F> {
        let d = self.dim();
        let dh = self.head_dim();
        let (batch, seq) = (cache.batch, cache.seq);
        let rows = batch * seq;
        let dctx = self.wo.backward_rows(&cache.ctx, dout, rows);
        let scale = F::of(1.0 / (dh as f64).sqrt());
        let mut dq = vec![F::zero(); rows * d];
        let mut dk = vec![F::zero(); rows * d];
        let mut dv = vec![F::zero(); rows * d];
        let mut dp = vec![F::zero(); seq * seq];
        for b in 0..batch {
            let base = b * seq * d;
            for h in 0..self.heads {
                let off = base + h * dh;
                let p = &cache.probs[(b * self.heads + h) * seq * seq..][..seq * seq];
                // dP = dctx_h · V_h^T
                F::gemm(seq, dh, seq, F::one(), &dctx[off..], d, 1, &cache.v[off..], 1, d, F::zero(), &mut dp, seq, 1);
                // dV_h = P^T · dctx_h
                F::gemm(seq, seq, dh, F::one(), p, 1, seq, &dctx[off..], d, 1, F::zero(), &mut dv[off..], d, 1);
                // dS = P ⊙ (dP − rowsum(dP ⊙ P)), then fold in the scale
                for (dpr, pr) in dp.chunks_exact_mut(seq).zip(p.chunks_exact(seq)) {
                    let dot: F = dpr.iter().zip(pr).map(|(&a, &b)| a * b).sum();
                    for (g, &pv) in dpr.iter_mut().zip(pr) {
                        *g = pv * (*g - dot) * scale;
                    }
                }
                F::gemm(seq, seq, dh, F::one(), &dp, seq, 1, &cache.k[off..], d, 1, F::zero(), &mut dq[off..], d, 1);
                F::gemm(seq, seq, dh, F::one(), &dp, 1, seq, &cache.q[off..], d, 1, F::zero(), &mut dk[off..], d, 1);
            }
        }
        let mut dx = self.wq.backward_rows(&cache.x, &dq, rows);
        for (a, b) in dx.iter_mut().zip(self.wk.backward_rows(&cache.x, &dk, rows)) {
            *a += b;
        }
        for (a, b) in dx.iter_mut().zip(self.wv.backward_rows(&cache.x, &dv, rows)) {
            *a += b;
        }
        dx
    }
}

impl<F: Float> Parameterized<F> for MultiHeadAttention<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        self.wq.visit_params(&join(prefix, "wq"), out);
        self.wk.visit_params(&join(prefix, "wk"), out);
        self.wv.visit_params(&join(prefix, "wv"), out);
        self.wo.visit_params(&join(prefix, "wo"), out);
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        self.wq.visit_params_mut(&join(prefix, "wq"), out);
        self.wk.visit_params_mut(&join(prefix, "wk"), out);
        self.wv.visit_params_mut(&join(prefix, "wv"), out);
        self.wo.visit_params_mut(&join(prefix, "wo"), out);
    }
}

/// Position-wise `D → D_ff → D` with ReLU.
#[derive(Debug, Clone)]
pub struct FeedForward<F> {
    pub up: Linear<F>,
    pub down: Linear<F>,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache<F> {
    x: Vec<F>,
    hidden: Vec<F>,
}

impl<F: Float> FeedForward<F> {
    pub fn new(dim: usize, d_ff: usize, rng: &mut Rng) -> Self {
        FeedForward {
            up: Linear::new(dim, d_ff, rng),
            down: Linear::new(d_ff, dim, rng),
        }
    }

    pub fn forward_rows(&self, x: &[F], rows: usize) -> (Vec<F>, FeedForwardCache<F>) {
        let mut hidden = self.up.forward_rows(x, rows);
        relu_inplace(&mut hidden);
        let y = self.down.forward_rows(&hidden, rows);
        (
            y,
            FeedForwardCache {
                x: x.to_vec(),
                hidden,
            },
        )
    }

    pub fn backward_rows(&mut self, cache: &FeedForwardCache<F>, dy: &[F], rows: usize) -> Vec<F> {
        let mut dh = self.down.backward_rows(&cache.hidden, dy, rows);
        relu_backward_inplace(&cache.hidden, &mut dh);
        self.up.backward_rows(&cache.x, &dh, rows)
    }
}

impl<F: Float> Parameterized<F> for FeedForward<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        self.up.visit_params(&join(prefix, "up"), out);
        self.down.visit_params(&join(prefix, "down"), out);
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        self.up.visit_params_mut(&join(prefix, "up"), out);
        self.down.visit_params_mut(&join(prefix, "down"), out);
    }
}

/// Pre-norm encoder block: `z = x + Drop(MHA(LN(x)))`, `y = z + Drop(FFN(LN(z)))`.
#[derive(Debug, Clone)]
pub struct TransformerBlock<F> {
    pub ln1: LayerNorm<F>,
    pub attn: MultiHeadAttention<F>,
    pub ln2: LayerNorm<F>,
    pub ffn: FeedForward<F>,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct BlockCache<F> {
    ln1: LayerNormCache<F>,
    pub attn: AttentionCache<F>,
    drop1: Option<Vec<F>>,
    ln2: LayerNormCache<F>,
    ffn: FeedForwardCache<F>,
    drop2: Option<Vec<F>>,
}

impl<F: Float> TransformerBlock<F> {
    pub fn new(dim: usize, heads: usize, d_ff: usize, dropout: f64, rng: &mut Rng) -> Result<Self> {
        Ok(TransformerBlock {
            ln1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(dim, heads, rng)?,
            ln2: LayerNorm::new(dim),
            ffn: FeedForward::new(dim, d_ff, rng),
            dropout,
        })
    }

    /// `rng` is `Some` in training mode (dropout active), `None` at eval.
    pub fn forward_rows(
        &self,
        x: &[F],
        batch: usize,
        seq: usize,
        mut rng: Option<&mut Rng>,
    ) -> (Vec<F>, BlockCache<F>) {
        let rows = batch * seq;
        let (a, ln1) = self.ln1.forward_rows(x);
        let (mut m, attn) = self.attn.forward_rows(&a, batch, seq);
        let drop1 = dropout_mask(m.len(), self.dropout, rng.as_deref_mut());
        apply_mask(&mut m, drop1.as_ref());
        let z: Vec<F> = x.iter().zip(&m).map(|(&a, &b)| a + b).collect();
        let (c, ln2) = self.ln2.forward_rows(&z);
        let (mut f, ffn) = self.ffn.forward_rows(&c, rows);
        let drop2 = dropout_mask(f.len(), self.dropout, rng);
        apply_mask(&mut f, drop2.as_ref());
        let y = z.iter().zip(&f).map(|(&a, &b)| a + b).collect();
        (
            y,
            BlockCache {
                ln1,
                attn,
                drop1,
                ln2,
                ffn,
                drop2,
            },
        )
    }

    pub fn backward_rows(&mut self, cache: &BlockCache<F>, dy: &[F]) -> Vec<F> {
        let rows = cache.attn.batch * cache.attn.seq;
        let mut df = dy.to_vec();
        apply_mask(&mut df, cache.drop2.as_ref());
        let dc = self.ffn.backward_rows(&cache.ffn, &df, rows);
        let mut dz = self.ln2.backward_rows(&cache.ln2, &dc);
        for (a, &b) in dz.iter_mut().zip(dy) {
            *a += b;
        }
        let mut dm = dz.clone();
        apply_mask(&mut dm, cache.drop1.as_ref());
        let da = self.attn.backward_rows(&cache.attn, &dm);
        let mut dx = self.ln1.backward_rows(&cache.ln1, &da);
        for (a, &b) in dx.iter_mut().zip(&dz) {
            *a += b;
        }
        dx
    }
}

impl<F: Float> Parameterized<F> for TransformerBlock<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        self.ln1.visit_params(&join(prefix, "ln1"), out);
        self.attn.visit_params(&join(prefix, "attn"), out);
        self.ln2.visit_params(&join(prefix, "ln2"), out);
        self.ffn.visit_params(&join(prefix, "ffn"), out);
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        self.ln1.visit_params_mut(&join(prefix, "ln1"), out);
        self.attn.visit_params_mut(&join(prefix, "attn"), out);
        self.ln2.visit_params_mut(&join(prefix, "ln2"), out);
        self.ffn.visit_params_mut(&join(prefix, "ffn"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn heads_must_divide_dim() {
        let mut rng = crate::rng::rng(0);
        assert!(matches!(
            MultiHeadAttention::<f32>::new(10, 3, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn singleton_sequence_attends_to_itself() {
        let mut rng = crate::rng::rng(0);
        let mha = MultiHeadAttention::<f64>::new(8, 2, &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, cache) = mha.forward_rows(&x, 1, 1);
        assert_eq!(cache.probs, vec![1.0, 1.0]);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = crate::rng::rng(5);
        let mha = MultiHeadAttention::<f32>::new(16, 4, &mut rng).unwrap();
        let x: Vec<f32> = (0..3 * 10 * 16).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, cache) = mha.forward_rows(&x, 3, 10);
        for row in cache.probs.chunks(10) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
        }
    }
}
