use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{
    argmax_labels, softmax, BatchNorm2d, Checkpoint, Conv2d, Module, NamedTensor, Param, Relu, Scalar, Tensor,
};
use crate::raster::LabelMap;
use crate::treecut::ClassTree;

use super::blocks::{DownBlock, UpBlock};
use super::spec::NetworkSpec;
use super::tree_block::TreeCnnBlock;

#[derive(Debug, Clone)]
pub enum Head<T> {
    /// Bridge features straight to the logits through a 1×1 conv.
    Plain(Conv2d<T>),
    Tree(TreeCnnBlock<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerCensus {
    pub first_conv: usize,
    pub down_blocks: usize,
    pub up_blocks: usize,
    pub bridge_norms: usize,
    pub tree_units: usize,
}

/// Parameters that survive a change of class tree.
pub fn is_segmentation_param(name: &str) -> bool {
    !name.starts_with("tree.") && !name.starts_with("head.")
}

/// Mini-DeepUNet with an optional Tree-CNN head.
#[derive(Debug, Clone)]
pub struct TreeSegNet<T> {
    spec: NetworkSpec,
    seed: u64,
    pub first_conv: Conv2d<T>,
    first_relu: Relu,
    pub downs: Vec<DownBlock<T>>,
    pub ups: Vec<UpBlock<T>>,
    pub bridge: BatchNorm2d<T>,
    pub head: Head<T>,
}

impl<T: Scalar> TreeSegNet<T> {
    pub fn new(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let d = spec.depth;
        let base = &spec.base_channels;
        let k = spec.first_conv_channels;
        let mut downs = Vec::with_capacity(d);
        for i in 0..d {
            let inc = if i == 0 { k } else { base[i - 1] };
            downs.push(DownBlock::new(&format!("down{i}"), inc, base[i], seed)?);
        }
        let mut ups = Vec::with_capacity(d);
        for i in 0..d {
            let inc = if i + 1 == d { base[d - 1] } else { base[i + 1] };
            ups.push(UpBlock::new(&format!("up{i}"), inc, base[i], base[i], seed)?);
        }
        let head = match &spec.class_tree {
            None => Head::Plain(Conv2d::new("head.conv", base[0], spec.num_classes, 1, 1, seed)?),
            Some(tree) => Head::Tree(TreeCnnBlock::new(tree, spec.num_classes, base[0], k, spec.resnext, seed)?),
        };
        Ok(Self {
            spec: spec.clone(),
            seed,
            first_conv: Conv2d::new("first_conv", spec.input_scale.len(), k, 3, 1, seed)?,
            first_relu: Relu::new(),
            downs,
            ups,
            bridge: BatchNorm2d::new("bridge", base[0])?,
            head,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn class_tree(&self) -> Option<&ClassTree> {
        self.spec.class_tree.as_ref()
    }

    pub fn tree_block(&self) -> Option<&TreeCnnBlock<T>> {
        match &self.head {
            Head::Tree(t) => Some(t),
            Head::Plain(_) => None,
        }
    }

    pub fn census(&self) -> LayerCensus {
        LayerCensus {
            first_conv: 1,
            down_blocks: self.downs.len(),
            up_blocks: self.ups.len(),
            bridge_norms: 1,
            tree_units: self.tree_block().map_or(0, |t| t.unit_count()),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [n, c, h, w] = x.shape();
        let m = self.spec.size_multiple();
        if c != self.spec.input_scale.len() {
            return Err(Error::Shape(format!("network expects {} input channels, got {c}", self.spec.input_scale.len())));
        }
        if n == 0 || h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::Shape(format!("tile {h}x{w} is not a positive multiple of {m} on both sides")));
        }
        Ok(())
    }

    fn scale_channels(&self, x: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = x.shape();
        let hw = h * w;
        let mut out = x.clone();
        for s in 0..n {
            let plane = out.sample_mut(s);
            for (ch, &k) in self.spec.input_scale.iter().enumerate().take(c) {
                let k = T::of(k);
                for v in &mut plane[ch * hw..(ch + 1) * hw] {
                    *v *= k;
                }
            }
        }
        out
    }

    /// Labels (1-based) and softmax scores, in evaluation mode.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<(Vec<LabelMap>, Tensor<T>)> {
        let logits = self.forward(x, false)?;
        let scores = softmax(&logits);
        let [n, _, h, w] = scores.shape();
        let flat = argmax_labels(&scores);
        let maps = flat
            .chunks(h * w)
            .take(n)
            .map(|c| LabelMap::from_vec(h, w, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok((maps, scores))
    }

    /// Every parameter and buffer, in visiting order.
    pub fn state(&mut self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| {
            out.push(NamedTensor {
                name: p.name.clone(),
                shape: p.value.shape(),
                data: p.value.data().iter().map(|v| v.f64() as f32).collect(),
            })
        });
        out
    }

    /// Copies every tensor whose name passes `filter` from `source`. Each such tensor
    /// must exist in `source` with the same shape. Returns how many were copied.
    pub fn load_state(&mut self, source: &[NamedTensor], filter: impl Fn(&str) -> bool) -> Result<usize> {
        let mut copied = 0;
        let mut failure = None;
        self.visit_params(&mut |p: &mut Param<T>| {
            if failure.is_some() || !filter(&p.name) {
                return;
            }
            match source.iter().find(|t| t.name == p.name) {
                None => failure = Some(Error::Format {
                    path: "<state>".into(),
                    message: format!("missing tensor {}", p.name),
                }),
                Some(t) if t.shape != p.value.shape() => {
                    failure = Some(Error::Shape(format!(
                        "{}: stored shape {:?}, network shape {:?}",
                        p.name,
                        t.shape,
                        p.value.shape()
                    )))
                }
                Some(t) => {
                    let values: Vec<T> = t.data.iter().map(|&v| T::of(v as f64)).collect();
                    match p.assign(&values) {
                        Ok(()) => copied += 1,
                        Err(e) => failure = Some(e),
                    }
                }
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(copied),
        }
    }

    /// Fresh network for `tree` with the segmentation weights of `self`; the head is
    /// newly initialized from the same seed.
    pub fn with_tree(&mut self, tree: Option<ClassTree>) -> Result<Self> {
        let spec = self.spec.clone().with_tree(tree);
        let mut next = Self::new(&spec, self.seed)?;
        let state = self.state();
        next.load_state(&state, is_segmentation_param)?;
        Ok(next)
    }

    /// Checkpoint holding the full state; `extra` is merged into the metadata.
    pub fn to_checkpoint(&mut self, extra: serde_json::Value) -> Result<Checkpoint> {
        let mut metadata = serde_json::json!({
            "network": serde_json::to_value(&self.spec)?,
            "seed": self.seed,
        });
        if let (Some(m), serde_json::Value::Object(e)) = (metadata.as_object_mut(), extra) {
            m.extend(e);
        }
        Ok(Checkpoint {
            metadata,
            tensors: self.state(),
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let spec_value = ckpt
            .metadata
            .get("network")
            .ok_or_else(|| Error::Data("checkpoint metadata has no network spec".into()))?;
        let spec: NetworkSpec = serde_json::from_value(spec_value.clone())?;
        let seed = ckpt.metadata.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);
        let mut net = Self::new(&spec, seed)?;
        net.load_state(&ckpt.tensors, |_| true)?;
        Ok(net)
    }
}

impl<T: Scalar> Module<T> for TreeSegNet<T> {
    fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let scaled = self.scale_channels(x);
        let x0 = self.first_relu.forward(&self.first_conv.forward(&scaled, train)?, train)?;
        let mut skips = Vec::with_capacity(self.downs.len());
        let mut h = x0.clone();
        for down in &mut self.downs {
            let (skip, pooled) = down.forward_pair(&h, train)?;
            skips.push(skip);
            h = pooled;
        }
        for (up, skip) in self.ups.iter_mut().zip(&skips).rev() {
            h = up.forward_pair(&h, skip, train)?;
        }
        let b = self.bridge.forward(&h, train)?;
        match &mut self.head {
            Head::Plain(conv) => conv.forward(&b, train),
            Head::Tree(tree) => tree.forward(&b, &x0, train),
        }
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let (db, dx0_tree) = match &mut self.head {
            Head::Plain(conv) => (conv.backward(grad)?, None),
            Head::Tree(tree) => {
                let (db, dx0) = tree.backward(grad)?;
                (db, Some(dx0))
            }
        };
        let mut dh = self.bridge.backward(&db)?;
        let mut d_skips = Vec::with_capacity(self.ups.len());
        for up in &mut self.ups {
            let (dy, ds) = up.backward_pair(&dh)?;
            d_skips.push(ds);
            dh = dy;
        }
        for (down, ds) in self.downs.iter_mut().zip(&d_skips).rev() {
            dh = down.backward_pair(Some(ds), &dh)?;
        }
        if let Some(extra) = dx0_tree {
            dh.add_assign(&extra)?;
        }
        let d_scaled = self.first_conv.backward(&self.first_relu.backward(&dh)?)?;
        Ok(self.scale_channels(&d_scaled))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.first_conv.visit_params(f);
        for d in &mut self.downs {
            d.visit_params(f);
        }
        for u in &mut self.ups {
            u.visit_params(f);
        }
        self.bridge.visit_params(f);
        match &mut self.head {
            Head::Plain(conv) => conv.visit_params(f),
            Head::Tree(tree) => tree.visit_params(f),
        }
    }
}
