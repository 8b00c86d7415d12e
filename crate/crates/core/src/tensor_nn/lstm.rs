use super::ops::sigmoid;
use super::tensor::join;
use super::{init, matmul, Float, Param, Parameterized, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One LSTM layer over `[B × T × D_in]` rows, zero initial state.
/// Gate blocks in the packed `4H` axis are ordered input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct LstmLayer<F> {
    pub w_ih: Param<F>,
    pub w_hh: Param<F>,
    pub bias: Param<F>,
}

#[derive(Debug, Clone)]
pub struct LstmCache<F> {
    x: Vec<F>,
    /// Activated gates per step, `[T × B × 4H]`.
    gates: Vec<F>,
    /// Cell states `c_t`, `[T × B × H]`.
    cells: Vec<F>,
    /// `tanh(c_t)`.
    cell_tanh: Vec<F>,
    /// Outputs `h_t` in `[B × T × H]` layout.
    pub outputs: Vec<F>,
    batch: usize,
    seq: usize,
}

impl<F: Float> LstmLayer<F> {
    pub fn new(d_in: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|b| *b = F::one());
        LstmLayer {
            w_ih: Param::new(init::xavier_uniform(&[d_in, 4 * hidden], d_in, hidden, rng)),
            w_hh: Param::new(init::xavier_uniform(&[hidden, 4 * hidden], hidden, hidden, rng)),
            bias: Param::new(bias),
        }
    }

    pub fn from_parts(w_ih: Tensor<F>, w_hh: Tensor<F>, bias: Tensor<F>) -> Result<Self> {
        let h = w_hh.shape().first().copied().unwrap_or(0);
        if w_ih.shape().len() != 2
            || w_ih.shape()[1] != 4 * h
            || w_hh.shape() != [h, 4 * h]
            || bias.shape() != [4 * h]
        {
            return Err(Error::Shape(format!(
                "inconsistent LSTM parts {:?} {:?} {:?}",
                w_ih.shape(),
                w_hh.shape(),
                bias.shape()
            )));
        }
        Ok(LstmLayer {
            w_ih: Param::new(w_ih),
            w_hh: Param::new(w_hh),
            bias: Param::new(bias),
        })
    }

    pub fn d_in(&self) -> usize {
        self.w_ih.value.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.value.shape()[0]
    }

    pub fn forward_rows(&self, x: &[F], batch: usize, seq: usize) -> Result<LstmCache<F>> {
        let (din, h) = (self.d_in(), self.hidden());
        let g4 = 4 * h;
        if seq == 0 || x.len() != batch * seq * din {
            return Err(Error::Shape(format!(
                "lstm expects {batch}×{seq}×{din} input (T ≥ 1), got {} values",
                x.len()
            )));
        }
        // Input contribution for every (b, t) at once.
        let mut xw = Vec::with_capacity(batch * seq * g4);
        for _ in 0..batch * seq {
            xw.extend_from_slice(self.bias.value.data());
        }
        matmul(x, false, self.w_ih.value.data(), false, batch * seq, din, g4, &mut xw, true);

        let mut gates = vec![F::zero(); seq * batch * g4];
        let mut cells = vec![F::zero(); seq * batch * h];
        let mut cell_tanh = vec![F::zero(); seq * batch * h];
        let mut outputs = vec![F::zero(); batch * seq * h];
        let mut pre = vec![F::zero(); batch * g4];
        for t in 0..seq {
            for b in 0..batch {
                pre[b * g4..(b + 1) * g4].copy_from_slice(&xw[(b * seq + t) * g4..][..g4]);
            }
            if t > 0 {
                // h_{t-1} lives in the strided [B × T × H] output buffer.
                F::gemm(batch, h, g4, F::one(), &outputs[(t - 1) * h..], seq * h, 1, self.w_hh.value.data(), g4, 1, F::one(), &mut pre, g4, 1);
            }
            for b in 0..batch {
                let p = &pre[b * g4..][..g4];
                let gt = &mut gates[(t * batch + b) * g4..][..g4];
                for j in 0..h {
                    gt[j] = sigmoid(p[j]);
                    gt[h + j] = sigmoid(p[h + j]);
                    gt[2 * h + j] = p[2 * h + j].tanh();
                    gt[3 * h + j] = sigmoid(p[3 * h + j]);
                }
                for j in 0..h {
                    let c_prev = if t > 0 { cells[((t - 1) * batch + b) * h + j] } else { F::zero() };
                    let c = gt[h + j] * c_prev + gt[j] * gt[2 * h + j];
                    let tc = c.tanh();
                    cells[(t * batch + b) * h + j] = c;
                    cell_tanh[(t * batch + b) * h + j] = tc;
                    outputs[(b * seq + t) * h + j] = gt[3 * h + j] * tc;
                }
            }
        }
        Ok(LstmCache {
            x: x.to_vec(),
            gates,
            cells,
            cell_tanh,
            outputs,
            batch,
            seq,
        })
    }

    /// Full backpropagation through time. `d_out` is `[B × T × H]`.
    pub fn backward_rows(&mut self, cache: &LstmCache<F>, d_out: &[F]) -> Vec<F> {
        let (din, h) = (self.d_in(), self.hidden());
        let g4 = 4 * h;
        let (batch, seq) = (cache.batch, cache.seq);
        let mut dpre_all = vec![F::zero(); batch * seq * g4];
        let mut dh_next = vec![F::zero(); batch * h];
        let mut dc_next = vec![F::zero(); batch * h];
        let mut dpre = vec![F::zero(); batch * g4];
        for t in (0..seq).rev() {
            for b in 0..batch {
                let gt = &cache.gates[(t * batch + b) * g4..][..g4];
                let dp = &mut dpre[b * g4..][..g4];
                for j in 0..h {
                    let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                    let tc = cache.cell_tanh[(t * batch + b) * h + j];
                    let c_prev = if t > 0 { cache.cells[((t - 1) * batch + b) * h + j] } else { F::zero() };
                    let dh = d_out[(b * seq + t) * h + j] + dh_next[b * h + j];
                    let d_o = dh * tc;
                    let dc = dh * o * (F::one() - tc * tc) + dc_next[b * h + j];
                    let d_i = dc * g;
                    let d_g = dc * i;
                    let d_f = dc * c_prev;
                    dc_next[b * h + j] = dc * f;
                    dp[j] = d_i * i * (F::one() - i);
                    dp[h + j] = d_f * f * (F::one() - f);
                    dp[2 * h + j] = d_g * (F::one() - g * g);
                    dp[3 * h + j] = d_o * o * (F::one() - o);
                }
                dpre_all[(b * seq + t) * g4..][..g4].copy_from_slice(dp);
            }
            if t > 0 {
                // dW_hh += h_{t-1}^T · dpre ; dh_{t-1} = dpre · W_hh^T
                F::gemm(h, batch, g4, F::one(), &cache.outputs[(t - 1) * h..], 1, seq * h, &dpre, g4, 1, F::one(), self.w_hh.grad.data_mut(), g4, 1);
                F::gemm(batch, g4, h, F::one(), &dpre, g4, 1, self.w_hh.value.data(), 1, g4, F::zero(), &mut dh_next, h, 1);
            }
        }
        let rows = batch * seq;
        matmul(&cache.x, true, &dpre_all, false, din, rows, g4, self.w_ih.grad.data_mut(), true);
        let gb = self.bias.grad.data_mut();
        for row in dpre_all.chunks_exact(g4) {
            for (g, &d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![F::zero(); rows * din];
        matmul(&dpre_all, false, self.w_ih.value.data(), true, rows, g4, din, &mut dx, false);
        dx
    }
}

impl<F: Float> Parameterized<F> for LstmLayer<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((join(prefix, "w_ih"), &self.w_ih));
        out.push((join(prefix, "w_hh"), &self.w_hh));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((join(prefix, "w_ih"), &mut self.w_ih));
        out.push((join(prefix, "w_hh"), &mut self.w_hh));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

/// Stacked LSTM; each layer feeds its full output sequence to the next.
#[derive(Debug, Clone)]
pub struct Lstm<F> {
    pub layers: Vec<LstmLayer<F>>,
}

impl<F: Float> Lstm<F> {
    pub fn new(d_in: usize, hidden: usize, layers: usize, rng: &mut Rng) -> Self {
        let layers = (0..layers)
            .map(|l| LstmLayer::new(if l == 0 { d_in } else { hidden }, hidden, rng))
            .collect();
        Lstm { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers.last().map(|l| l.hidden()).unwrap_or(0)
    }

    pub fn forward_rows(&self, x: &[F], batch: usize, seq: usize) -> Result<Vec<LstmCache<F>>> {
        let mut caches: Vec<LstmCache<F>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = caches.last().map(|c| c.outputs.as_slice()).unwrap_or(x);
            let cache = layer.forward_rows(input, batch, seq)?;
            caches.push(cache);
        }
        Ok(caches)
    }

    pub fn backward_rows(&mut self, caches: &[LstmCache<F>], d_out: &[F]) -> Vec<F> {
        let mut grad = d_out.to_vec();
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            grad = layer.backward_rows(cache, &grad);
        }
        grad
    }

    /// Tensor-level forward: returns the top-layer outputs `[B × T × H]` and
    /// the final hidden state `[B × H]`.
    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
        let (b, t) = match *x.shape() {
            [b, t, d] if d == self.layers[0].d_in() => (b, t),
            _ => return Err(Error::Shape(format!("lstm input {:?}", x.shape()))),
        };
        let caches = self.forward_rows(x.data(), b, t)?;
        let h = self.hidden();
        let out = caches.last().expect("at least one layer").outputs.clone();
        let last: Vec<F> = (0..b)
            .flat_map(|bi| out[(bi * t + t - 1) * h..][..h].to_vec())
            .collect();
        Ok((Tensor::from_vec(&[b, t, h], out)?, Tensor::from_vec(&[b, h], last)?))
    }
}

impl<F: Float> Parameterized<F> for Lstm<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_params(&join(prefix, &i.to_string()), out);
        }
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_params_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_outputs() {
        let layer = LstmLayer::from_parts(
            Tensor::<f64>::zeros(&[3, 8]),
            Tensor::zeros(&[2, 8]),
            Tensor::zeros(&[8]),
        )
        .unwrap();
        let lstm = Lstm { layers: vec![layer] };
        let x = Tensor::from_fn(&[2, 5, 3], |i| (i as f64).sin());
        let (out, last) = lstm.forward(&x).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(last.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_scalar_cell_arithmetic() {
        // H = 1, D_in = 1: every gate is a scalar affine map of x.
        let (wi, wf, wg, wo) = (0.3, -0.7, 1.1, 0.4);
        let (bi, bf, bg, bo) = (0.05, 1.0, -0.2, 0.1);
        let layer = LstmLayer::from_parts(
            Tensor::from_vec(&[1, 4], vec![wi, wf, wg, wo]).unwrap(),
            Tensor::from_vec(&[1, 4], vec![9.0, 9.0, 9.0, 9.0]).unwrap(),
            Tensor::from_vec(&[4], vec![bi, bf, bg, bo]).unwrap(),
        )
        .unwrap();
        let x = 0.8f64;
        let cache = layer.forward_rows(&[x], 1, 1).unwrap();
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(wi * x + bi);
        let g = (wg * x + bg).tanh();
        let o = s(wo * x + bo);
        let c = i * g; // forget gate multiplies the zero initial cell
        let want = o * c.tanh();
        assert!((cache.outputs[0] - want).abs() < 1e-15);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = crate::rng::rng(0);
        let layer = LstmLayer::<f32>::new(4, 3, &mut rng);
        assert_eq!(layer.bias.value.data(), &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
    }
}
