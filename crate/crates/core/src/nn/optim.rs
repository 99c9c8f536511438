use crate::error::{Error, Result};

use super::param::Param;
use super::tensor::Scalar;
use super::Module;

pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// One SGD-with-momentum update: `v ← μ·v + g`, `w ← w − lr·v`.
pub fn sgd_momentum_step<T: Scalar>(param: &mut Param<T>, lr: f64, momentum: f64) -> Result<()> {
    if !param.trainable {
        return Ok(());
    }
    if param.grad.shape() != param.value.shape() || param.velocity.shape() != param.value.shape() {
        return Err(Error::Shape(format!("{}: gradient or velocity shape mismatch", param.name)));
    }
    let (mu, lr) = (T::of(momentum), T::of(lr));
    let Param {
        value, grad, velocity, ..
    } = param;
    for ((w, v), &g) in value
        .data_mut()
        .iter_mut()
        .zip(velocity.data_mut().iter_mut())
        .zip(grad.data())
    {
        *v = mu * *v + g;
        *w -= lr * *v;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub momentum: f64,
}

impl Default for Sgd {
    fn default() -> Self {
        Self {
            momentum: DEFAULT_MOMENTUM,
        }
    }
}

impl Sgd {
    pub fn step<T: Scalar, M: Module<T> + ?Sized>(&self, module: &mut M, lr: f64) -> Result<()> {
        let mut result = Ok(());
        module.visit_params(&mut |p| {
            if result.is_ok() {
                result = sgd_momentum_step(p, lr, self.momentum);
            }
        });
        result
    }
}

pub fn zero_grads<T: Scalar, M: Module<T> + ?Sized>(module: &mut M) {
    module.visit_params(&mut |p| p.zero_grad());
}

pub fn reset_velocity<T: Scalar, M: Module<T> + ?Sized>(module: &mut M) {
    module.visit_params(&mut |p| p.velocity.fill(T::zero()));
}
