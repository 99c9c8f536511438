use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seeding;

use super::tensor::{Scalar, Tensor};

/// A named tensor owned by a layer. Trainable parameters carry a gradient and a
/// momentum buffer; buffers (running statistics) are persisted but never updated by
/// the optimizer.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub velocity: Tensor<T>,
    pub trainable: bool,
}

impl<T: Scalar> Param<T> {
    fn with_value(name: String, value: Tensor<T>, trainable: bool) -> Self {
        Self {
            name,
            grad: value.zeros_like(),
            velocity: value.zeros_like(),
            value,
            trainable,
        }
    }

    pub fn constant(name: impl Into<String>, shape: [usize; 4], v: f64) -> Result<Self> {
        Ok(Self::with_value(name.into(), Tensor::full(shape, T::of(v))?, true))
    }

    pub fn buffer(name: impl Into<String>, shape: [usize; 4], v: f64) -> Result<Self> {
        Ok(Self::with_value(name.into(), Tensor::full(shape, T::of(v))?, false))
    }

    /// He-normal initialization, `N(0, 2 / fan_in)`. The draw depends only on
    /// `(seed, name, shape)`; values are produced in f64 so every precision starts
    /// from the same numbers.
    pub fn he_normal(name: impl Into<String>, shape: [usize; 4], fan_in: usize, seed: u64) -> Result<Self> {
        let name = name.into();
        let mut rng = seeding::rng(seed, &name, &shape.map(|d| d as u64));
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(normal.sample(&mut rng))).collect();
        Ok(Self::with_value(name, Tensor::from_vec(shape, data)?, true))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Replaces the value, keeping the shape.
    pub fn assign(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.value.len() {
            return Err(Error::Shape(format!(
                "{}: {} values for shape {:?}",
                self.name,
                values.len(),
                self.value.shape()
            )));
        }
        self.value.data_mut().copy_from_slice(values);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_pure_in_seed_name_shape() {
        let a = Param::<f32>::he_normal("l.weight", [4, 3, 3, 3], 27, 9).unwrap();
        let b = Param::<f32>::he_normal("l.weight", [4, 3, 3, 3], 27, 9).unwrap();
        assert_eq!(a.value, b.value);
        let c = Param::<f32>::he_normal("m.weight", [4, 3, 3, 3], 27, 9).unwrap();
        assert_ne!(a.value, c.value);
        let d = Param::<f64>::he_normal("l.weight", [4, 3, 3, 3], 27, 9).unwrap();
        assert_eq!(d.value.cast::<f32>(), a.value);
    }

    #[test]
    fn he_scale() {
        let p = Param::<f64>::he_normal("w", [64, 16, 3, 3], 144, 1).unwrap();
        let n = p.value.len() as f64;
        let var = p.value.data().iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var - 2.0 / 144.0).abs() < 0.1 * 2.0 / 144.0, "{var}");
    }
}
