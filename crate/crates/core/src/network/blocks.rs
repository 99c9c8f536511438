use crate::error::{Error, Result};
use crate::nn::{add, concat_channels, split_channels, Conv2d, MaxPool2, Module, Param, Relu, Scalar, Tensor, Upsample2};

/// Encoder level: `u = relu(conv3(x))`, `v = conv3(u)`, `p = v + proj(x)`. `p` goes
/// out on the concatenating connection and `maxpool2(p)` to the next level.
#[derive(Debug, Clone)]
pub struct DownBlock<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    /// 1×1 projection, absent when channel counts match.
    pub proj: Option<Conv2d<T>>,
    relu: Relu,
    pool: MaxPool2,
}

impl<T: Scalar> DownBlock<T> {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), in_ch, out_ch, 3, 1, seed)?,
            conv2: Conv2d::new(&format!("{name}.conv2"), out_ch, out_ch, 3, 1, seed)?,
            proj: (in_ch != out_ch)
                .then(|| Conv2d::new(&format!("{name}.proj"), in_ch, out_ch, 1, 1, seed))
                .transpose()?,
            relu: Relu::new(),
            pool: MaxPool2::new(),
        })
    }

    /// Returns `(skip, pooled)`.
    pub fn forward_pair(&mut self, x: &Tensor<T>, train: bool) -> Result<(Tensor<T>, Tensor<T>)> {
        let u = self.relu.forward(&self.conv1.forward(x, train)?, train)?;
        let v = self.conv2.forward(&u, train)?;
        let shortcut = match &mut self.proj {
            Some(p) => p.forward(x, train)?,
            None => x.clone(),
        };
        let p = add(&v, &shortcut)?;
        let pooled = self.pool.forward(&p, train)?;
        Ok((p, pooled))
    }

    /// Takes gradients for both outputs; `d_skip` may be absent.
    pub fn backward_pair(&mut self, d_skip: Option<&Tensor<T>>, d_pooled: &Tensor<T>) -> Result<Tensor<T>> {
        let mut dp = self.pool.backward(d_pooled)?;
        if let Some(ds) = d_skip {
            dp.add_assign(ds)?;
        }
        let du = self.relu.backward(&self.conv2.backward(&dp)?)?;
        let mut dx = self.conv1.backward(&du)?;
        match &mut self.proj {
            Some(p) => dx.add_assign(&p.backward(&dp)?)?,
            None => dx.add_assign(&dp)?,
        }
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for DownBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        Ok(self.forward_pair(x, train)?.1)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_pair(None, grad)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv1.visit_params(f);
        self.conv2.visit_params(f);
        if let Some(p) = &mut self.proj {
            p.visit_params(f);
        }
    }
}

/// Decoder level: `z = up2(y)`, `w = concat(z, skip)`, `a = relu(conv3(w))`,
/// `b = conv3(a)`, output `b + proj(z)`.
#[derive(Debug, Clone)]
pub struct UpBlock<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub proj: Option<Conv2d<T>>,
    in_ch: usize,
    skip_ch: usize,
    up: Upsample2,
    relu: Relu,
}

impl<T: Scalar> UpBlock<T> {
    pub fn new(name: &str, in_ch: usize, skip_ch: usize, out_ch: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), in_ch + skip_ch, out_ch, 3, 1, seed)?,
            conv2: Conv2d::new(&format!("{name}.conv2"), out_ch, out_ch, 3, 1, seed)?,
            proj: (in_ch != out_ch)
                .then(|| Conv2d::new(&format!("{name}.proj"), in_ch, out_ch, 1, 1, seed))
                .transpose()?,
            in_ch,
            skip_ch,
            up: Upsample2::new(),
            relu: Relu::new(),
        })
    }

    pub fn forward_pair(&mut self, y: &Tensor<T>, skip: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let z = self.up.forward(y, train)?;
        if skip.batch() != z.batch() || skip.height() != z.height() || skip.width() != z.width() {
            return Err(Error::Shape(format!(
                "{}: skip {:?} does not match upsampled {:?}",
                self.conv1.weight.name,
                skip.shape(),
                z.shape()
            )));
        }
        let w = concat_channels(&[&z, skip])?;
        let a = self.relu.forward(&self.conv1.forward(&w, train)?, train)?;
        let b = self.conv2.forward(&a, train)?;
        let shortcut = match &mut self.proj {
            Some(p) => p.forward(&z, train)?,
            None => z,
        };
        add(&b, &shortcut)
    }

    /// Returns `(d_y, d_skip)`.
    pub fn backward_pair(&mut self, grad: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let da = self.relu.backward(&self.conv2.backward(grad)?)?;
        let dw = self.conv1.backward(&da)?;
        let mut parts = split_channels(&dw, &[self.in_ch, self.skip_ch])?;
        let d_skip = parts.pop().expect("two parts");
        let mut dz = parts.pop().expect("two parts");
        match &mut self.proj {
            Some(p) => dz.add_assign(&p.backward(grad)?)?,
            None => dz.add_assign(grad)?,
        }
        Ok((self.up.backward(&dz)?, d_skip))
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv1.visit_params(f);
        self.conv2.visit_params(f);
        if let Some(p) = &mut self.proj {
            p.visit_params(f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ResNextSpec {
    pub cardinality: usize,
    pub bottleneck_channels: usize,
    pub out_channels: usize,
}

impl Default for ResNextSpec {
    fn default() -> Self {
        Self {
            cardinality: 8,
            bottleneck_channels: 32,
            out_channels: 32,
        }
    }
}

impl ResNextSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cardinality == 0 || self.bottleneck_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument("ResNeXt sizes must be positive".into()));
        }
        if self.bottleneck_channels % self.cardinality != 0 {
            return Err(Error::InvalidArgument(format!(
                "bottleneck width {} is not divisible by cardinality {}",
                self.bottleneck_channels, self.cardinality
            )));
        }
        Ok(())
    }
}

/// Bottleneck residual unit: `1×1 → relu → grouped 3×3 → relu → 1×1`, plus the
/// (projected) identity, then relu.
#[derive(Debug, Clone)]
pub struct ResNextUnit<T> {
    pub conv_in: Conv2d<T>,
    pub conv_group: Conv2d<T>,
    pub conv_out: Conv2d<T>,
    pub proj: Option<Conv2d<T>>,
    relu1: Relu,
    relu2: Relu,
    relu_out: Relu,
}

impl<T: Scalar> ResNextUnit<T> {
    pub fn new(name: &str, in_ch: usize, spec: ResNextSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let b = spec.bottleneck_channels;
        Ok(Self {
            conv_in: Conv2d::new(&format!("{name}.conv_in"), in_ch, b, 1, 1, seed)?,
            conv_group: Conv2d::new(&format!("{name}.conv_group"), b, b, 3, spec.cardinality, seed)?,
            conv_out: Conv2d::new(&format!("{name}.conv_out"), b, spec.out_channels, 1, 1, seed)?,
            proj: (in_ch != spec.out_channels)
                .then(|| Conv2d::new(&format!("{name}.proj"), in_ch, spec.out_channels, 1, 1, seed))
                .transpose()?,
            relu1: Relu::new(),
            relu2: Relu::new(),
            relu_out: Relu::new(),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.conv_in.in_channels()
    }
}

impl<T: Scalar> Module<T> for ResNextUnit<T> {
    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let a = self.relu1.forward(&self.conv_in.forward(x, train)?, train)?;
        let b = self.relu2.forward(&self.conv_group.forward(&a, train)?, train)?;
        let c = self.conv_out.forward(&b, train)?;
        let shortcut = match &mut self.proj {
            Some(p) => p.forward(x, train)?,
            None => x.clone(),
        };
        self.relu_out.forward(&add(&c, &shortcut)?, train)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let ds = self.relu_out.backward(grad)?;
        let db = self.relu2.backward(&self.conv_out.backward(&ds)?)?;
        let da = self.relu1.backward(&self.conv_group.backward(&db)?)?;
        let mut dx = self.conv_in.backward(&da)?;
        match &mut self.proj {
            Some(p) => dx.add_assign(&p.backward(&ds)?)?,
            None => dx.add_assign(&ds)?,
        }
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv_in.visit_params(f);
        self.conv_group.visit_params(f);
        self.conv_out.visit_params(f);
        if let Some(p) = &mut self.proj {
            p.visit_params(f);
        }
    }
}
