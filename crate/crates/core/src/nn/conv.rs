use crate::error::{Error, Result};

use super::param::Param;
use super::tensor::{Scalar, Tensor};
use super::Module;

/// Same-padded (zero) square convolution with optional channel groups. Computes the
/// cross-correlation via im2col and a matrix product.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    groups: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        groups: usize,
        seed: u64,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || groups == 0 {
            return Err(Error::InvalidArgument(format!(
                "{name}: channel and group counts must be positive"
            )));
        }
        if in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(Error::InvalidArgument(format!(
                "{name}: {in_channels} -> {out_channels} channels not divisible into {groups} groups"
            )));
        }
        if kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "{name}: same padding needs an odd kernel, got {kernel}"
            )));
        }
        let cin_g = in_channels / groups;
        let shape = [out_channels, cin_g, kernel, kernel];
        Ok(Self {
            weight: Param::he_normal(format!("{name}.weight"), shape, cin_g * kernel * kernel, seed)?,
            bias: Param::constant(format!("{name}.bias"), [1, out_channels, 1, 1], 0.0)?,
            in_channels,
            out_channels,
            kernel,
            groups,
            input: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Number of trainable values, bias included.
    pub fn param_count(&self) -> usize {
        self.weight.value.len() + self.bias.value.len()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {}",
                self.weight.name,
                self.in_channels,
                x.channels()
            )));
        }
        Ok(())
    }
}

/// Unfolds `c × h × w` into a `(c·k·k) × (h·w)` matrix of zero-padded windows.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    for ci in 0..c {
        let src = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * hw..(row + 1) * hw];
                let x0 = p.saturating_sub(kx);
                let x1 = (w + p).saturating_sub(kx).min(w);
                for y in 0..h {
                    let line = &mut dst[y * w..(y + 1) * w];
                    let sy = y + ky;
                    if sy < p || sy - p >= h || x0 >= x1 {
                        line.fill(T::zero());
                        continue;
                    }
                    let sy = sy - p;
                    line[..x0].fill(T::zero());
                    line[x1..].fill(T::zero());
                    let sx0 = x0 + kx - p;
                    line[x0..x1].copy_from_slice(&src[sy * w + sx0..sy * w + sx0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters window gradients back, accumulating into `dx`.
fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    for ci in 0..c {
        let dst = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * hw..(row + 1) * hw];
                let x0 = p.saturating_sub(kx);
                let x1 = (w + p).saturating_sub(kx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < p || sy - p >= h {
                        continue;
                    }
                    let sy = sy - p;
                    let sx0 = x0 + kx - p;
                    for (d, &g) in dst[sy * w + sx0..sy * w + sx0 + (x1 - x0)]
                        .iter_mut()
                        .zip(&src[y * w + x0..y * w + x1])
                    {
                        *d += g;
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _train: bool) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let [n, _, h, w] = x.shape();
        let hw = h * w;
        let (k, g) = (self.kernel, self.groups);
        let cin_g = self.in_channels / g;
        let cout_g = self.out_channels / g;
        let kdim = cin_g * k * k;
        let mut out = Tensor::zeros([n, self.out_channels, h, w])?;
        let mut col = if k == 1 { Vec::new() } else { vec![T::zero(); kdim * hw] };
        let weight = self.weight.value.data();
        for s in 0..n {
            let xs = x.sample(s);
            let os = out.sample_mut(s);
            for gi in 0..g {
                let xin = &xs[gi * cin_g * hw..(gi + 1) * cin_g * hw];
                let cols: &[T] = if k == 1 {
                    xin
                } else {
                    im2col(xin, cin_g, h, w, k, &mut col);
                    &col
                };
                let wg = &weight[gi * cout_g * kdim..(gi + 1) * cout_g * kdim];
                let og = &mut os[gi * cout_g * hw..(gi + 1) * cout_g * hw];
                T::gemm(cout_g, kdim, hw, T::one(), wg, kdim, 1, cols, hw, 1, T::zero(), og, hw, 1);
            }
            for (co, &b) in self.bias.value.data().iter().enumerate() {
                os[co * hw..(co + 1) * hw].iter_mut().for_each(|v| *v += b);
            }
        }
        self.input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Invariant(format!("{}: backward before forward", self.weight.name)))?;
        let [n, _, h, w] = x.shape();
        if grad.shape() != [n, self.out_channels, h, w] {
            return Err(Error::Shape(format!(
                "{}: gradient shape {:?} does not match output",
                self.weight.name,
                grad.shape()
            )));
        }
        let hw = h * w;
        let (k, g) = (self.kernel, self.groups);
        let cin_g = self.in_channels / g;
        let cout_g = self.out_channels / g;
        let kdim = cin_g * k * k;
        let mut dx = x.zeros_like();
        let mut col = if k == 1 { Vec::new() } else { vec![T::zero(); kdim * hw] };
        let mut dcol = if k == 1 { Vec::new() } else { vec![T::zero(); kdim * hw] };
        let weight = self.weight.value.data();
        let dweight = self.weight.grad.data_mut();
        for s in 0..n {
            let xs = x.sample(s);
            let gs = grad.sample(s);
            let dxs = dx.sample_mut(s);
            for gi in 0..g {
                let xin = &xs[gi * cin_g * hw..(gi + 1) * cin_g * hw];
                let gy = &gs[gi * cout_g * hw..(gi + 1) * cout_g * hw];
                let wg = &weight[gi * cout_g * kdim..(gi + 1) * cout_g * kdim];
                let dwg = &mut dweight[gi * cout_g * kdim..(gi + 1) * cout_g * kdim];
                let dxin = &mut dxs[gi * cin_g * hw..(gi + 1) * cin_g * hw];
                if k == 1 {
                    T::gemm(cout_g, hw, kdim, T::one(), gy, hw, 1, xin, 1, hw, T::one(), dwg, kdim, 1);
                    T::gemm(kdim, cout_g, hw, T::one(), wg, 1, kdim, gy, hw, 1, T::one(), dxin, hw, 1);
                } else {
                    im2col(xin, cin_g, h, w, k, &mut col);
                    T::gemm(cout_g, hw, kdim, T::one(), gy, hw, 1, &col, 1, hw, T::one(), dwg, kdim, 1);
                    T::gemm(kdim, cout_g, hw, T::one(), wg, 1, kdim, gy, hw, 1, T::zero(), &mut dcol, hw, 1);
                    col2im(&dcol, cin_g, h, w, k, dxin);
                }
            }
        }
        let db = self.bias.grad.data_mut();
        for s in 0..n {
            let gs = grad.sample(s);
            for (co, d) in db.iter_mut().enumerate() {
                let mut acc = T::zero();
                for &v in &gs[co * hw..(co + 1) * hw] {
                    acc += v;
                }
                *d += acc;
            }
        }
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
