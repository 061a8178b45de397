use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;

pub(crate) fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::param(shape, data).expect("positive shape")
}

/// Uniform in `±1/sqrt(fan_in)`.
pub(crate) fn fan_in(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    uniform(rng, shape, 1.0 / (fan_in as f64).sqrt())
}

pub(crate) fn normal(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::param(shape, data).expect("positive shape")
}

pub(crate) fn constant(shape: &[usize], value: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::param(shape, vec![value; n]).expect("positive shape")
}
