use super::tensor::join;
use super::{init, matmul, Float, Param, Parameterized, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Affine map `y = x·W + b` applied to the last axis. `W` is stored
/// `[d_in × d_out]`.
#[derive(Debug, Clone)]
pub struct Linear<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
}

impl<F: Float> Linear<F> {
    pub fn new(d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        Linear {
            weight: Param::new(init::xavier_uniform(&[d_in, d_out], d_in, d_out, rng)),
            bias: Param::zeros(&[d_out]),
        }
    }

    pub fn from_parts(weight: Tensor<F>, bias: Tensor<F>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::Shape(format!(
                "linear weight {:?} incompatible with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Linear {
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn d_in(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.value.shape()[1]
    }

    /// Forward over `rows` stacked input vectors.
    pub fn forward_rows(&self, x: &[F], rows: usize) -> Vec<F> {
        let (din, dout) = (self.d_in(), self.d_out());
        debug_assert_eq!(x.len(), rows * din);
        let mut y = Vec::with_capacity(rows * dout);
        for _ in 0..rows {
            y.extend_from_slice(self.bias.value.data());
        }
        matmul(x, false, self.weight.value.data(), false, rows, din, dout, &mut y, true);
        y
    }

    /// Accumulates weight/bias gradients and returns `dL/dx`.
    pub fn backward_rows(&mut self, x: &[F], dy: &[F], rows: usize) -> Vec<F> {
        self.accumulate_grads(x, dy, rows);
        self.input_grad(dy, rows)
    }

    pub fn accumulate_grads(&mut self, x: &[F], dy: &[F], rows: usize) {
        let (din, dout) = (self.d_in(), self.d_out());
        matmul(x, true, dy, false, din, rows, dout, self.weight.grad.data_mut(), true);
        let gb = self.bias.grad.data_mut();
        for row in dy.chunks_exact(dout) {
            for (g, &d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
    }

    pub fn input_grad(&self, dy: &[F], rows: usize) -> Vec<F> {
        let (din, dout) = (self.d_in(), self.d_out());
        let mut dx = vec![F::zero(); rows * din];
        matmul(dy, false, self.weight.value.data(), true, rows, dout, din, &mut dx, false);
        dx
    }

    /// Tensor-level forward: any leading shape, last axis `d_in`.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (rows, shape) = self.check_input(x)?;
        let mut out_shape = shape;
        *out_shape.last_mut().expect("rank checked") = self.d_out();
        Tensor::from_vec(&out_shape, self.forward_rows(x.data(), rows))
    }

    pub fn backward(&mut self, x: &Tensor<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let (rows, _) = self.check_input(x)?;
        if dy.len() != rows * self.d_out() {
            return Err(Error::Shape(format!(
                "linear backward: upstream gradient {:?} does not match {} rows of {}",
                dy.shape(),
                rows,
                self.d_out()
            )));
        }
        let dx = self.backward_rows(x.data(), dy.data(), rows);
        Tensor::from_vec(x.shape(), dx)
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<(usize, Vec<usize>)> {
        match x.shape().last() {
            Some(&d) if d == self.d_in() => Ok((x.len() / d.max(1), x.shape().to_vec())),
            _ => Err(Error::Shape(format!(
                "linear expects last axis {}, got {:?}",
                self.d_in(),
                x.shape()
            ))),
        }
    }
}

impl<F: Float> Parameterized<F> for Linear<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_passes_input_through() {
        let mut w = Tensor::<f64>::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let lin = Linear::from_parts(w, Tensor::zeros(&[3])).unwrap();
        let x = Tensor::from_vec(&[2, 1, 3], vec![1.0, -2.0, 3.5, 0.25, 0.0, 9.0]).unwrap();
        assert_eq!(lin.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_arithmetic() {
        let lin = Linear::from_parts(
            Tensor::from_vec(&[2, 1], vec![1.0f64, 2.0]).unwrap(),
            Tensor::from_vec(&[1], vec![0.5]).unwrap(),
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 1, 2], vec![3.0, 4.0]).unwrap();
        let y = lin.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[11.5]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = crate::rng::rng(0);
        let lin = Linear::<f32>::new(4, 2, &mut rng);
        let x = Tensor::zeros(&[2, 3]);
        assert!(matches!(lin.forward(&x), Err(Error::Shape(_))));
    }
}
