use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Float, Tensor};
use crate::rng::Rng;

/// Uniform(±√(6/(fan_in+fan_out))).
pub fn xavier_uniform<F: Float>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<F> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| F::of(rng.random_range(-bound..bound)))
}

pub fn normal<F: Float>(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor<F> {
    let dist = Normal::new(0.0, std).expect("std is finite and positive");
    Tensor::from_fn(shape, |_| F::of(dist.sample(rng)))
}
