use crate::error::{Error, Result};

use super::param::Param;
use super::tensor::{Scalar, Tensor};
use super::Module;

/// `max(0, x)`; the gradient at exactly 0 is taken as 0.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    active: Vec<bool>,
    shape: Option<[usize; 4]>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Module<T> for Relu {
    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        self.active = x.data().iter().map(|&v| v > T::zero()).collect();
        self.shape = Some(x.shape());
        Ok(x.map(|v| if v > T::zero() { v } else { T::zero() }))
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape != Some(grad.shape()) {
            return Err(Error::Shape("relu: gradient does not match the last input".into()));
        }
        let mut dx = grad.clone();
        for (d, &on) in dx.data_mut().iter_mut().zip(&self.active) {
            if !on {
                *d = T::zero();
            }
        }
        Ok(dx)
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param<T>)) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let x = Tensor::from_vec([1, 1, 1, 3], vec![-1.0f32, 2.0, 0.0]).unwrap();
        let mut r = Relu::new();
        assert_eq!(r.forward(&x, true).unwrap().data(), &[0.0, 2.0, 0.0]);
        let g = Tensor::full([1, 1, 1, 3], 1.0f32).unwrap();
        assert_eq!(r.backward(&g).unwrap().data(), &[0.0, 1.0, 0.0]);
    }
}
