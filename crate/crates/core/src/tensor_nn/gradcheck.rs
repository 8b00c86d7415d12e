//! Central finite-difference verification of analytic gradients.
//!
//! The scalar objective is `L = Σ y ⊙ R` for a fixed random `R`, so every
//! output element contributes to the check.

use rand::Rng as _;
use serde::Serialize;

use super::{Parameterized, Tensor};
use crate::error::Result;

pub const FD_EPS: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub module: String,
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }

    pub fn offending(&self) -> Vec<&GradCheckEntry> {
        self.entries.iter().filter(|e| e.max_rel_err >= self.tolerance).collect()
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn sample_indices(len: usize, cap: usize) -> Vec<usize> {
    if len <= cap {
        (0..len).collect()
    } else {
        (0..cap).map(|i| i * len / cap).collect()
    }
}

/// Runs the check.
///
/// `run(module, input, upstream)` must perform a deterministic forward pass
/// and return its output; when `upstream` is `Some`, it must also run the
/// backward pass (accumulating parameter gradients) and return `dL/dinput`.
/// At most `max_per_tensor` evenly spaced entries of each tensor are probed.
pub fn grad_check<M, R>(
    name: &str,
    module: &mut M,
    input: &Tensor<f64>,
    tolerance: f64,
    max_per_tensor: usize,
    seed: u64,
    mut run: R,
) -> Result<GradCheckReport>
where
    M: Parameterized<f64>,
    R: FnMut(&mut M, &Tensor<f64>, Option<&Tensor<f64>>) -> Result<(Tensor<f64>, Option<Tensor<f64>>)>,
{
    let (out, _) = run(module, input, None)?;
    let mut rng = crate::rng::rng(seed);
    let proj = Tensor::from_fn(out.shape(), |_| rng.random_range(-1.0..1.0));
    let objective = |y: &Tensor<f64>| y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum::<f64>();

    module.zero_grad();
    let (_, dx) = run(module, input, Some(&proj))?;
    let analytic: Vec<(String, Vec<f64>)> = module
        .params()
        .into_iter()
        .map(|(n, p)| (n, p.grad.data().to_vec()))
        .collect();

    let mut entries = Vec::new();
    for (pi, (pname, grads)) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        let idx = sample_indices(grads.len(), max_per_tensor);
        for &j in &idx {
            let orig = module.params_mut()[pi].1.value.data()[j];
            module.params_mut()[pi].1.value.data_mut()[j] = orig + FD_EPS;
            let plus = objective(&run(module, input, None)?.0);
            module.params_mut()[pi].1.value.data_mut()[j] = orig - FD_EPS;
            let minus = objective(&run(module, input, None)?.0);
            module.params_mut()[pi].1.value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(grads[j], numeric));
        }
        entries.push(GradCheckEntry {
            name: pname.clone(),
            checked: idx.len(),
            max_rel_err: worst,
        });
    }

    if let Some(dx) = dx {
        let mut worst = 0.0f64;
        let idx = sample_indices(input.len(), max_per_tensor);
        let mut probe = input.clone();
        for &j in &idx {
            let orig = probe.data()[j];
            probe.data_mut()[j] = orig + FD_EPS;
            let plus = objective(&run(module, &probe, None)?.0);
            probe.data_mut()[j] = orig - FD_EPS;
            let minus = objective(&run(module, &probe, None)?.0);
            probe.data_mut()[j] = orig;
            worst = worst.max(rel_err(dx.data()[j], (plus - minus) / (2.0 * FD_EPS)));
        }
        entries.push(GradCheckEntry {
            name: "input".into(),
            checked: idx.len(),
            max_rel_err: worst,
        });
    }

    Ok(GradCheckReport {
        module: name.to_string(),
        tolerance,
        entries,
    })
}

/// Layer-level checks on small random shapes, used by the `gradcheck`
/// command and the test suites.
pub mod layers {
    use rand::Rng as _;

    use super::{grad_check, GradCheckReport};
    use crate::error::Result;
    use crate::rng;
    use crate::tensor_nn::ops::{relu_backward_inplace, relu_inplace};
    use crate::tensor_nn::{maxpool2, maxpool2_backward, Conv1d, Linear, Lstm, Tensor, TransformerBlock};

    pub const LINEAR_TOL: f64 = 1e-6;
    pub const CONV_TOL: f64 = 1e-5;
    pub const RECURRENT_TOL: f64 = 1e-4;
    pub const ATTENTION_TOL: f64 = 1e-4;

    fn random_input(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut r = rng::rng(seed);
        Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
    }

    pub fn linear(seed: u64) -> Result<GradCheckReport> {
        let mut r = rng::rng(seed);
        let mut lin = Linear::<f64>::new(5, 3, &mut r);
        for b in lin.bias.value.data_mut() {
            *b = r.random_range(-0.5..0.5);
        }
        let x = random_input(&[2, 4, 5], seed ^ 1);
        grad_check("linear", &mut lin, &x, LINEAR_TOL, usize::MAX, seed ^ 2, |m, x, up| {
            let y = m.forward(x)?;
            let dx = match up {
                Some(up) => Some(m.backward(x, up)?),
                None => None,
            };
            Ok((y, dx))
        })
    }

    /// conv1d → ReLU → width-2 max pool.
    pub fn conv_relu_pool(seed: u64) -> Result<GradCheckReport> {
        let mut r = rng::rng(seed);
        let mut conv = Conv1d::<f64>::new(3, 4, 5, &mut r);
        for b in conv.bias.value.data_mut() {
            *b = r.random_range(-0.2..0.2);
        }
        let (batch, len) = (2, 11);
        let x = random_input(&[batch, 3, len], seed ^ 1);
        grad_check("conv1d+relu+maxpool", &mut conv, &x, CONV_TOL, usize::MAX, seed ^ 2, |m, x, up| {
            let (mut y, cache) = m.forward_raw(x.data(), batch, len)?;
            relu_inplace(&mut y);
            let rows = batch * m.c_out();
            let (p, arg) = maxpool2(&y, rows, len);
            let out = Tensor::from_vec(&[batch, m.c_out(), len / 2], p)?;
            let dx = match up {
                Some(up) => {
                    let mut dy = maxpool2_backward(&arg, up.data(), y.len());
                    relu_backward_inplace(&y, &mut dy);
                    Some(Tensor::from_vec(x.shape(), m.backward_raw(&cache, &dy))?)
                }
                None => None,
            };
            Ok((out, dx))
        })
    }

    pub fn lstm(seed: u64) -> Result<GradCheckReport> {
        let mut r = rng::rng(seed);
        let mut lstm = Lstm::<f64>::new(3, 4, 2, &mut r);
        let (batch, seq) = (2, 3);
        let x = random_input(&[batch, seq, 3], seed ^ 1);
        grad_check("lstm", &mut lstm, &x, RECURRENT_TOL, usize::MAX, seed ^ 2, |m, x, up| {
            let caches = m.forward_rows(x.data(), batch, seq)?;
            let out = caches.last().expect("layers").outputs.clone();
            let dx = match up {
                Some(up) => Some(Tensor::from_vec(x.shape(), m.backward_rows(&caches, up.data()))?),
                None => None,
            };
            Ok((Tensor::from_vec(&[batch, seq, m.hidden()], out)?, dx))
        })
    }

    pub fn transformer_block(seed: u64) -> Result<GradCheckReport> {
        let mut r = rng::rng(seed);
        let (batch, seq, dim, heads) = (2, 4, 8, 2);
        let mut block = TransformerBlock::<f64>::new(dim, heads, 4 * dim, 0.1, &mut r)?;
        // Non-trivial affine parameters so their gradients are exercised.
        for ln in [&mut block.ln1, &mut block.ln2] {
            for g in ln.gamma.value.data_mut() {
                *g = r.random_range(0.5..1.5);
            }
            for b in ln.beta.value.data_mut() {
                *b = r.random_range(-0.3..0.3);
            }
        }
        let x = random_input(&[batch, seq, dim], seed ^ 1);
        grad_check("transformer_block", &mut block, &x, ATTENTION_TOL, usize::MAX, seed ^ 2, |m, x, up| {
            let (y, cache) = m.forward_rows(x.data(), batch, seq, None);
            let dx = match up {
                Some(up) => Some(Tensor::from_vec(x.shape(), m.backward_rows(&cache, up.data()))?),
                None => None,
            };
            Ok((Tensor::from_vec(x.shape(), y)?, dx))
        })
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        fn assert_pass(report: GradCheckReport) {
            assert!(
                report.passed(),
                "{} failed: {:?}",
                report.module,
                report.offending()
            );
        }

        #[test]
        fn linear_gradients() {
            assert_pass(linear(11).unwrap());
        }

        #[test]
        fn conv_gradients() {
            assert_pass(conv_relu_pool(12).unwrap());
        }

        #[test]
        fn lstm_gradients() {
            assert_pass(lstm(13).unwrap());
        }

        #[test]
        fn block_gradients() {
            assert_pass(transformer_block(14).unwrap());
        }
    }
}
