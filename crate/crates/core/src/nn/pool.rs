use crate::error::{Error, Result};

use super::param::Param;
use super::tensor::{Scalar, Tensor};
use super::Module;

/// 2×2 max pooling with stride 2. Ties go to the first cell in row-major order.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    input_shape: Option<[usize; 4]>,
    argmax: Vec<usize>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Module<T> for MaxPool2 {
    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("max pooling needs even spatial dims, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros([n, c, oh, ow])?;
        self.argmax.clear();
        self.argmax.reserve(out.len());
        let xd = x.data();
        let od = out.data_mut();
        for plane in 0..n * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xx;
                    for cand in [best + 1, best + w, best + w + 1] {
                        if xd[cand] > xd[best] {
                            best = cand;
                        }
                    }
                    od[(plane * oh + y) * ow + xx] = xd[best];
                    self.argmax.push(best);
                }
            }
        }
        self.input_shape = Some(x.shape());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .ok_or_else(|| Error::Invariant("max pool: backward before forward".into()))?;
        if grad.len() != self.argmax.len() {
            return Err(Error::Shape("max pool: gradient does not match output".into()));
        }
        let mut dx = Tensor::zeros(shape)?;
        let d = dx.data_mut();
        for (&src, &g) in self.argmax.iter().zip(grad.data()) {
            d[src] += g;
        }
        Ok(dx)
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param<T>)) {}
}

/// Nearest-neighbour 2× upsampling.
#[derive(Debug, Clone, Default)]
pub struct Upsample2 {
    input_shape: Option<[usize; 4]>,
}

impl Upsample2 {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Module<T> for Upsample2 {
    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        let ow = 2 * w;
        let mut out = Tensor::zeros([n, c, 2 * h, ow])?;
        let xd = x.data();
        let od = out.data_mut();
        for plane in 0..n * c {
            for y in 0..2 * h {
                let src = &xd[(plane * h + y / 2) * w..(plane * h + y / 2 + 1) * w];
                let dst = &mut od[(plane * 2 * h + y) * ow..(plane * 2 * h + y + 1) * ow];
                for (xx, d) in dst.iter_mut().enumerate() {
                    *d = src[xx / 2];
                }
            }
        }
        self.input_shape = Some(x.shape());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .ok_or_else(|| Error::Invariant("upsample: backward before forward".into()))?;
        let [n, c, h, w] = shape;
        if grad.shape() != [n, c, 2 * h, 2 * w] {
            return Err(Error::Shape("upsample: gradient does not match output".into()));
        }
        let mut dx = Tensor::zeros(shape)?;
        let gd = grad.data();
        let d = dx.data_mut();
        let ow = 2 * w;
        for plane in 0..n * c {
            for y in 0..2 * h {
                for xx in 0..ow {
                    d[(plane * h + y / 2) * w + xx / 2] += gd[(plane * 2 * h + y) * ow + xx];
                }
            }
        }
        Ok(dx)
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param<T>)) {}
}
