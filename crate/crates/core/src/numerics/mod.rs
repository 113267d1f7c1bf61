//! Deterministic numeric core: tensors, gradient evaluation, gradient
//! checking, AdamW and the learning-rate schedule.
//!
//! All math is f64 and every reduction runs in ascending index order.

mod linalg;
mod objective;
mod optim;
mod tensor;

pub use linalg::{
    affine, affine_backward, dot, gemm, gemm_nt_acc, gemm_tn, log_sigmoid, relu_inplace, sigmoid,
};
pub use objective::{
    forward_backward, forward_only, grad_check, grad_check_detailed, CoordCheck, GradCheckReport,
    Objective,
};
pub use optim::{adamw_step, lr_at, AdamWConfig, OptimizerState};
pub use tensor::{GradStore, Matrix, ParamStore, Tensor, TensorEntry};

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Uniform in ±√(6/(fan_in+fan_out)).
pub fn glorot_uniform<R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

/// Normal(0, std) entries.
pub fn normal_init<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("std is positive");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}
