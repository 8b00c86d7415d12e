use super::tensor::join;
use super::{init, Float, Param, Parameterized, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// 1-D cross-correlation with stride 1 and "same" zero padding
/// (`(K-1)/2` on the left, the remainder on the right).
/// Input `[B × C_in × T]`, kernels `[C_out × C_in × K]`.
#[derive(Debug, Clone)]
pub struct Conv1d<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
}

#[derive(Debug, Clone)]
pub struct ConvCache<F> {
    cols: Vec<F>,
    batch: usize,
    len: usize,
}

impl<F: Float> Conv1d<F> {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, rng: &mut Rng) -> Self {
        Conv1d {
            weight: Param::new(init::xavier_uniform(
                &[c_out, c_in, kernel],
                c_in * kernel,
                c_out * kernel,
                rng,
            )),
            bias: Param::zeros(&[c_out]),
        }
    }

    pub fn from_parts(weight: Tensor<F>, bias: Tensor<F>) -> Result<Self> {
        if weight.shape().len() != 3 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::Shape(format!(
                "conv kernels {:?} incompatible with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Conv1d {
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn c_out(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    fn pad_left(&self) -> usize {
        (self.kernel() - 1) / 2
    }

    pub fn forward_raw(&self, x: &[F], batch: usize, len: usize) -> Result<(Vec<F>, ConvCache<F>)> {
        let (ci, co, k) = (self.c_in(), self.c_out(), self.kernel());
        if x.len() != batch * ci * len {
            return Err(Error::Shape(format!(
                "conv1d expects {batch}×{ci}×{len} input, got {} values",
                x.len()
            )));
        }
        if k > len {
            return Err(Error::Shape(format!("kernel {k} longer than sequence {len}")));
        }
        let pad = self.pad_left() as isize;
        let ck = ci * k;
        let mut cols = vec![F::zero(); batch * ck * len];
        for b in 0..batch {
            let xb = &x[b * ci * len..][..ci * len];
            let cb = &mut cols[b * ck * len..][..ck * len];
            for c in 0..ci {
                for kk in 0..k {
                    let row = &mut cb[(c * k + kk) * len..][..len];
                    let shift = kk as isize - pad;
                    for (t, r) in row.iter_mut().enumerate() {
                        let src = t as isize + shift;
                        if src >= 0 && (src as usize) < len {
                            *r = xb[c * len + src as usize];
                        }
                    }
                }
            }
        }
        let mut y = vec![F::zero(); batch * co * len];
        let bias = self.bias.value.data();
        for b in 0..batch {
            let yb = &mut y[b * co * len..][..co * len];
            for (o, row) in yb.chunks_exact_mut(len).enumerate() {
                row.iter_mut().for_each(|v| *v = bias[o]);
            }
            F::gemm(co, ck, len, F::one(), self.weight.value.data(), ck, 1, &cols[b * ck * len..], len, 1, F::one(), yb, len, 1);
        }
        Ok((y, ConvCache { cols, batch, len }))
    }

    pub fn backward_raw(&mut self, cache: &ConvCache<F>, dy: &[F]) -> Vec<F> {
        let (ci, co, k) = (self.c_in(), self.c_out(), self.kernel());
        let (batch, len) = (cache.batch, cache.len);
        let ck = ci * k;
        let pad = self.pad_left() as isize;
        let mut dx = vec![F::zero(); batch * ci * len];
        let mut dcols = vec![F::zero(); ck * len];
        for b in 0..batch {
            let dyb = &dy[b * co * len..][..co * len];
            let cb = &cache.cols[b * ck * len..][..ck * len];
            F::gemm(co, len, ck, F::one(), dyb, len, 1, cb, 1, len, F::one(), self.weight.grad.data_mut(), ck, 1);
            for (o, row) in dyb.chunks_exact(len).enumerate() {
                self.bias.grad.data_mut()[o] += row.iter().copied().sum::<F>();
            }
            F::gemm(ck, co, len, F::one(), self.weight.value.data(), 1, ck, dyb, len, 1, F::zero(), &mut dcols, len, 1);
            let dxb = &mut dx[b * ci * len..][..ci * len];
            for c in 0..ci {
                for kk in 0..k {
                    let row = &dcols[(c * k + kk) * len..][..len];
                    let shift = kk as isize - pad;
                    for (t, &g) in row.iter().enumerate() {
                        let src = t as isize + shift;
                        if src >= 0 && (src as usize) < len {
                            dxb[c * len + src as usize] += g;
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, ConvCache<F>)> {
        let [b, c, t] = match *x.shape() {
            [b, c, t] if c == self.c_in() => [b, c, t],
            _ => {
                return Err(Error::Shape(format!(
                    "conv1d expects [B × {} × T], got {:?}",
                    self.c_in(),
                    x.shape()
                )))
            }
        };
        let _ = c;
        let (y, cache) = self.forward_raw(x.data(), b, t)?;
        Ok((Tensor::from_vec(&[b, self.c_out(), t], y)?, cache))
    }
}

impl<F: Float> Parameterized<F> for Conv1d<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

/// Non-overlapping width-2 max pooling along the last axis of
/// `[rows × len]`; output length is `len / 2` (floor). Returns the winning
/// source index of every output, first maximum on ties.
pub fn maxpool2<F: Float>(x: &[F], rows: usize, len: usize) -> (Vec<F>, Vec<usize>) {
    let out_len = len / 2;
    let mut y = Vec::with_capacity(rows * out_len);
    let mut arg = Vec::with_capacity(rows * out_len);
    for r in 0..rows {
        let row = &x[r * len..][..len];
        for j in 0..out_len {
            let (a, b) = (row[2 * j], row[2 * j + 1]);
            let pick = if b > a { 2 * j + 1 } else { 2 * j };
            y.push(row[pick]);
            arg.push(r * len + pick);
        }
    }
    (y, arg)
}

pub fn maxpool2_backward<F: Float>(arg: &[usize], dy: &[F], input_len: usize) -> Vec<F> {
    let mut dx = vec![F::zero(); input_len];
    for (&i, &g) in arg.iter().zip(dy) {
        dx[i] += g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_nn::ops::relu_inplace;

    #[test]
    fn zero_kernel_gives_zero_after_relu() {
        let conv = Conv1d::from_parts(Tensor::<f64>::zeros(&[2, 3, 4]), Tensor::zeros(&[2])).unwrap();
        let x = Tensor::from_fn(&[1, 3, 8], |i| i as f64 - 5.0);
        let (y, _) = conv.forward(&x).unwrap();
        let mut v = y.into_vec();
        relu_inplace(&mut v);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unit_kernel_then_pool() {
        let conv = Conv1d::from_parts(
            Tensor::from_vec(&[1, 1, 1], vec![1.0f64]).unwrap(),
            Tensor::zeros(&[1]),
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 1, 4], vec![3.0, 1.0, 4.0, 1.0]).unwrap();
        let (y, _) = conv.forward(&x).unwrap();
        let (p, arg) = maxpool2(y.data(), 1, 4);
        assert_eq!(p, vec![3.0, 4.0]);
        assert_eq!(arg, vec![0, 2]);
    }

    #[test]
    fn pool_tie_routes_to_first_index() {
        let (_, arg) = maxpool2(&[2.0f32, 2.0, 5.0, 5.0, 9.0], 1, 5);
        assert_eq!(arg, vec![0, 2]);
        let dx = maxpool2_backward(&arg, &[1.0f32, 1.0], 5);
        assert_eq!(dx, vec![1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn same_padding_keeps_length_for_even_kernel() {
        let mut rng = crate::rng::rng(2);
        let conv = Conv1d::<f32>::new(9, 32, 12, &mut rng);
        let x = Tensor::zeros(&[2, 9, 128]);
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 32, 128]);
    }
}
