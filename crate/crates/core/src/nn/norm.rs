use crate::error::{Error, Result};

use super::param::Param;
use super::tensor::{Scalar, Tensor};
use super::Module;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over batch and spatial positions. Training uses
/// batch statistics and updates the running ones as
/// `running ← 0.9·running + 0.1·batch` (unbiased variance); evaluation uses the
/// running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    shape: [usize; 4],
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    train: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Result<Self> {
        let shape = [1, channels, 1, 1];
        Ok(Self {
            gamma: Param::constant(format!("{name}.gamma"), shape, 1.0)?,
            beta: Param::constant(format!("{name}.beta"), shape, 0.0)?,
            running_mean: Param::buffer(format!("{name}.running_mean"), shape, 0.0)?,
            running_var: Param::buffer(format!("{name}.running_var"), shape, 1.0)?,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "{}: expected {} channels, got {c}",
                self.gamma.name,
                self.channels()
            )));
        }
        let hw = h * w;
        let m = n * hw;
        if train && m < 2 {
            return Err(Error::Shape(format!(
                "{}: training needs at least 2 values per channel, got {m}",
                self.gamma.name
            )));
        }
        let mut out = x.zeros_like();
        let mut xhat = vec![0.0; x.len()];
        let mut inv_stds = Vec::with_capacity(c);
        for ch in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0;
                for s in 0..n {
                    sum += x.sample(s)[ch * hw..(ch + 1) * hw].iter().map(|v| v.f64()).sum::<f64>();
                }
                let mean = sum / m as f64;
                let mut sq = 0.0;
                for s in 0..n {
                    sq += x.sample(s)[ch * hw..(ch + 1) * hw]
                        .iter()
                        .map(|v| (v.f64() - mean).powi(2))
                        .sum::<f64>();
                }
                let var = sq / m as f64;
                let rm = &mut self.running_mean.value.data_mut()[ch];
                *rm = T::of(BN_MOMENTUM * rm.f64() + (1.0 - BN_MOMENTUM) * mean);
                let rv = &mut self.running_var.value.data_mut()[ch];
                let unbiased = sq / (m - 1) as f64;
                *rv = T::of(BN_MOMENTUM * rv.f64() + (1.0 - BN_MOMENTUM) * unbiased);
                (mean, var)
            } else {
                (
                    self.running_mean.value.data()[ch].f64(),
                    self.running_var.value.data()[ch].f64(),
                )
            };
            let inv_std = 1.0 / (var + BN_EPS).sqrt();
            inv_stds.push(inv_std);
            let g = self.gamma.value.data()[ch].f64();
            let b = self.beta.value.data()[ch].f64();
            for s in 0..n {
                let off = (s * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (x.data()[i].f64() - mean) * inv_std;
                    xhat[i] = xh;
                    out.data_mut()[i] = T::of(g * xh + b);
                }
            }
        }
        self.cache = Some(Cache {
            shape: x.shape(),
            xhat,
            inv_std: inv_stds,
            train,
        });
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Invariant(format!("{}: backward before forward", self.gamma.name)))?;
        if grad.shape() != cache.shape {
            return Err(Error::Shape(format!("{}: gradient shape mismatch", self.gamma.name)));
        }
        let [n, c, h, w] = cache.shape;
        let hw = h * w;
        let m = (n * hw) as f64;
        let mut dx = grad.zeros_like();
        for ch in 0..c {
            let idx = |s: usize| (s * c + ch) * hw..(s * c + ch + 1) * hw;
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for s in 0..n {
                for i in idx(s) {
                    let dy = grad.data()[i].f64();
                    sum_dy += dy;
                    sum_dy_xhat += dy * cache.xhat[i];
                }
            }
            self.gamma.grad.data_mut()[ch] += T::of(sum_dy_xhat);
            self.beta.grad.data_mut()[ch] += T::of(sum_dy);
            let g = self.gamma.value.data()[ch].f64();
            let inv_std = cache.inv_std[ch];
            for s in 0..n {
                for i in idx(s) {
                    let dy = grad.data()[i].f64();
                    let v = if cache.train {
                        g * inv_std * (dy - sum_dy / m - cache.xhat[i] * sum_dy_xhat / m)
                    } else {
                        g * inv_std * dy
                    };
                    dx.data_mut()[i] = T::of(v);
                }
            }
        }
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}
