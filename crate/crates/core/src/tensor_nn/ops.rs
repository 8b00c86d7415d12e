//! Stateless elementwise pieces: activations, softmax, dropout.

use rand::Rng as _;

use super::Float;
use crate::rng::Rng;

pub fn relu_inplace<F: Float>(x: &mut [F]) {
    for v in x.iter_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// Zeroes `dy` where the activation output was clamped.
pub fn relu_backward_inplace<F: Float>(activated: &[F], dy: &mut [F]) {
    for (d, &a) in dy.iter_mut().zip(activated) {
        if a <= F::zero() {
            *d = F::zero();
        }
    }
}

pub fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Numerically stable softmax of each `width`-long row, in place.
pub fn softmax_rows_inplace<F: Float>(x: &mut [F], width: usize) {
    for row in x.chunks_exact_mut(width) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Inverted dropout mask: entries are `0` or `1/(1-p)`. `None` means the
/// identity (rate zero or eval mode).
pub fn dropout_mask<F: Float>(len: usize, p: f64, rng: Option<&mut Rng>) -> Option<Vec<F>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = F::of(1.0 / (1.0 - p));
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { F::zero() } else { keep })
            .collect(),
    )
}

pub fn apply_mask<F: Float>(x: &mut [F], mask: Option<&Vec<F>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}
