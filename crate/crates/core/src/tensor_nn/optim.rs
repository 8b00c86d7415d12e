use super::{Float, Param, Tensor};

/// AdamW hyperparameters. The learning rate is supplied per step so that a
/// schedule and per-group rates can drive it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments for an ordered list of parameters.
#[derive(Debug, Clone)]
pub struct AdamW<F> {
    pub config: AdamWConfig,
    pub step: u64,
    first: Vec<Tensor<F>>,
    second: Vec<Tensor<F>>,
}

impl<F: Float> AdamW<F> {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// One update over `(param, lr)` pairs. The parameter order must be the
    /// same on every call.
    pub fn step(&mut self, params: &mut [(&mut Param<F>, f64)]) {
        if self.first.is_empty() {
            self.first = params.iter().map(|(p, _)| Tensor::zeros(p.value.shape())).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "parameter list changed between steps");
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (one_b1, one_b2) = (F::of(1.0 - c.beta1), F::of(1.0 - c.beta2));
        let (bc1, bc2, eps) = (F::of(bc1), F::of(bc2), F::of(c.eps));
        for ((param, lr), (m, v)) in params.iter_mut().zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            debug_assert_eq!(m.shape(), param.value.shape());
            let lr_f = F::of(*lr);
            let decay = F::one() - F::of(*lr * c.weight_decay);
            let g = param.grad.data();
            let w = param.value.data_mut();
            for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w = *w * decay - lr_f * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Cosine annealing from `lr0` at step 0 to `lr_min` at `total_steps`.
pub fn cosine_lr(step: u64, total_steps: u64, lr0: f64, lr_min: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = (step.min(total_steps)) as f64 / total_steps as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_leaves_params() {
        let mut p = Param::new(Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap());
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        for _ in 0..5 {
            opt.step(&mut [(&mut p, 1e-3)]);
        }
        assert_eq!(p.value.data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn single_scalar_step_matches_hand_arithmetic() {
        let (w0, g, lr, wd) = (0.75f64, -0.2f64, 5e-4, 0.01);
        let mut p = Param::new(Tensor::from_vec(&[1], vec![w0]).unwrap());
        p.grad.data_mut()[0] = g;
        let mut opt = AdamW::new(AdamWConfig::default());
        opt.step(&mut [(&mut p, lr)]);
        // m = 0.1 g, v = 0.001 g², bias corrections 0.1 and 0.001 → m̂ = g, v̂ = g².
        let m_hat = (0.1 * g) / 0.1;
        let v_hat = (0.001 * g * g) / (1.0 - 0.999);
        let want = w0 * (1.0 - lr * wd) - lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.value.data()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 5e-4, 1e-6), 5e-4);
        assert!((cosine_lr(100, 100, 5e-4, 1e-6) - 1e-6).abs() < 1e-18);
        let mid = cosine_lr(50, 100, 5e-4, 1e-6);
        assert!((mid - (1e-6 + 0.5 * (5e-4 - 1e-6))).abs() < 1e-15);
    }
}
