//! Layer toolkit with hand-written backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`, accumulates
//! parameter gradients in `backward`, and returns the gradient with respect to its
//! input. Layers are generic over the scalar type so the same code runs in f32 for
//! training and in f64 for gradient checks.

mod activation;
pub mod checkpoint;
mod conv;
mod gradcheck;
mod loss;
mod norm;
mod optim;
mod param;
mod pool;
mod tensor;

pub use activation::Relu;
pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_VERSION};
pub use conv::Conv2d;
pub use gradcheck::{grad_check, grad_check_with, GradCheckConfig, GradCheckReport};
pub use loss::{argmax_labels, softmax, softmax_ce_loss};
pub use norm::{BatchNorm2d, BN_EPS, BN_MOMENTUM};
pub use optim::{reset_velocity, sgd_momentum_step, zero_grads, Sgd, DEFAULT_MOMENTUM};
pub use param::Param;
pub use pool::{MaxPool2, Upsample2};
pub use tensor::{add, concat_channels, split_channels, Scalar, Tensor};

use crate::error::Result;

pub trait Module<T: Scalar> {
    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>>;

    /// Gradient w.r.t. the input of the most recent `forward`; parameter gradients
    /// are added to their `grad` buffers.
    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>>;

    /// Visits every parameter and buffer in a fixed order.
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>));
}

/// Number of trainable scalars.
pub fn param_count<T: Scalar, M: Module<T> + ?Sized>(module: &mut M) -> usize {
    let mut n = 0;
    module.visit_params(&mut |p| {
        if p.trainable {
            n += p.value.len();
        }
    });
    n
}
