use super::tensor::join;
use super::{Float, Param, Parameterized, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer normalization over the last axis with learned scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<F> {
    xhat: Vec<F>,
    inv_std: Vec<F>,
}

impl<F: Float> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Param::new(Tensor::from_fn(&[dim], |_| F::one())),
            beta: Param::zeros(&[dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes each row to zero mean and unit variance, before the affine.
    pub fn normalize_rows(x: &[F], dim: usize) -> (Vec<F>, Vec<F>) {
        let n = F::of(dim as f64);
        let eps = F::of(LAYER_NORM_EPS);
        let mut xhat = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(x.len() / dim);
        for row in x.chunks_exact(dim) {
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let is = F::one() / (var + eps).sqrt();
            xhat.extend(row.iter().map(|&v| (v - mean) * is));
            inv_std.push(is);
        }
        (xhat, inv_std)
    }

    pub fn forward_rows(&self, x: &[F]) -> (Vec<F>, LayerNormCache<F>) {
        let dim = self.dim();
        let (xhat, inv_std) = Self::normalize_rows(x, dim);
        let g = self.gamma.value.data();
        let b = self.beta.value.data();
        let y = xhat
            .chunks_exact(dim)
            .flat_map(|row| row.iter().zip(g).zip(b).map(|((&v, &g), &b)| v * g + b))
            .collect();
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward_rows(&mut self, cache: &LayerNormCache<F>, dy: &[F]) -> Vec<F> {
        let dim = self.dim();
        let n = F::of(dim as f64);
        let mut dx = vec![F::zero(); dy.len()];
        let g = self.gamma.value.data().to_vec();
        let gg = self.gamma.grad.data_mut();
        for (r, (dyr, xr)) in dy.chunks_exact(dim).zip(cache.xhat.chunks_exact(dim)).enumerate() {
            for i in 0..dim {
                gg[i] += dyr[i] * xr[i];
            }
            let mut sum_d = F::zero();
            let mut sum_dx = F::zero();
            for i in 0..dim {
                let d = dyr[i] * g[i];
                sum_d += d;
                sum_dx += d * xr[i];
            }
            let scale = cache.inv_std[r] / n;
            let out = &mut dx[r * dim..(r + 1) * dim];
            for i in 0..dim {
                let d = dyr[i] * g[i];
                out[i] = scale * (n * d - sum_d - xr[i] * sum_dx);
            }
        }
        let gb = self.beta.grad.data_mut();
        for dyr in dy.chunks_exact(dim) {
            for (b, &d) in gb.iter_mut().zip(dyr) {
                *b += d;
            }
        }
        dx
    }
}

impl<F: Float> Parameterized<F> for LayerNorm<F> {
    fn visit_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }

    fn visit_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((join(prefix, "gamma"), &mut self.gamma));
        out.push((join(prefix, "beta"), &mut self.beta));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn normalized_rows_have_zero_mean_unit_std() {
        let mut rng = crate::rng::rng(3);
        let dim = 128;
        let x: Vec<f64> = (0..dim * 16).map(|_| rng.random_range(-50.0..80.0)).collect();
        let (xhat, _) = LayerNorm::<f64>::normalize_rows(&x, dim);
        for row in xhat.chunks_exact(dim) {
            let mean: f64 = row.iter().sum::<f64>() / dim as f64;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / dim as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var.sqrt() - 1.0).abs() < 1e-5);
        }
    }
}
