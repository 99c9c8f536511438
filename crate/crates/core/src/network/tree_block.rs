use crate::error::{Error, Result};
use crate::nn::{concat_channels, split_channels, Conv2d, Module, Param, Scalar, Tensor};
use crate::treecut::ClassTree;

use super::blocks::{ResNextSpec, ResNextUnit};

/// One ResNeXt unit per tree node, in pre-order. Every unit sees its parent's output
/// (the bridge features at the root) concatenated with the first-conv feature maps.
/// Leaf outputs, stacked in class order, go through a final 1×1 convolution to the
/// class logits.
#[derive(Debug, Clone)]
pub struct TreeCnnBlock<T> {
    tree: ClassTree,
    units: Vec<ResNextUnit<T>>,
    parent: Vec<Option<usize>>,
    /// Unit index of each class's leaf, class 1 first.
    leaf_unit: Vec<usize>,
    pub classifier: Conv2d<T>,
    bridge_channels: usize,
    concat_channels: usize,
    unit_out: usize,
    unit_shapes: Vec<[usize; 4]>,
}

impl<T: Scalar> TreeCnnBlock<T> {
    pub fn new(
        tree: &ClassTree,
        num_classes: usize,
        bridge_channels: usize,
        concat_channels: usize,
        spec: ResNextSpec,
        seed: u64,
    ) -> Result<Self> {
        tree.validate(num_classes)?;
        let nodes = tree.preorder();
        let mut units = Vec::with_capacity(nodes.len());
        let mut parent = Vec::with_capacity(nodes.len());
        let mut leaf_unit = vec![usize::MAX; num_classes];
        for (k, (node, p)) in nodes.iter().enumerate() {
            let src = if p.is_some() { spec.out_channels } else { bridge_channels };
            units.push(ResNextUnit::new(&format!("tree.unit{k}"), src + concat_channels, spec, seed)?);
            parent.push(*p);
            if let ClassTree::Leaf(c) = node {
                leaf_unit[c - 1] = k;
            }
        }
        Ok(Self {
            tree: tree.clone(),
            classifier: Conv2d::new("tree.classifier", num_classes * spec.out_channels, num_classes, 1, 1, seed)?,
            units,
            parent,
            leaf_unit,
            bridge_channels,
            concat_channels,
            unit_out: spec.out_channels,
            unit_shapes: Vec::new(),
        })
    }

    pub fn tree(&self) -> &ClassTree {
        &self.tree
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn units(&self) -> &[ResNextUnit<T>] {
        &self.units
    }

    /// Parent unit of each unit, `None` for the root.
    pub fn routing(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// Units a pixel of `class` flows through, root first.
    pub fn path(&self, class: usize) -> Option<Vec<usize>> {
        let mut k = *self.leaf_unit.get(class.checked_sub(1)?)?;
        let mut path = vec![k];
        while let Some(p) = self.parent[k] {
            path.push(p);
            k = p;
        }
        path.reverse();
        Some(path)
    }

    pub fn forward(&mut self, bridge: &Tensor<T>, x0: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        if bridge.channels() != self.bridge_channels || x0.channels() != self.concat_channels {
            return Err(Error::Shape(format!(
                "tree block expects {} bridge and {} concatenated channels, got {} and {}",
                self.bridge_channels,
                self.concat_channels,
                bridge.channels(),
                x0.channels()
            )));
        }
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(self.units.len());
        self.unit_shapes.clear();
        for k in 0..self.units.len() {
            let src = match self.parent[k] {
                Some(p) => &outs[p],
                None => bridge,
            };
            let input = concat_channels(&[src, x0])?;
            self.unit_shapes.push(input.shape());
            let out = self.units[k].forward(&input, train)?;
            outs.push(out);
        }
        let leaves: Vec<&Tensor<T>> = self.leaf_unit.iter().map(|&k| &outs[k]).collect();
        self.classifier.forward(&concat_channels(&leaves)?, train)
    }

    /// Returns `(d_bridge, d_x0)`.
    pub fn backward(&mut self, d_logits: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        if self.unit_shapes.len() != self.units.len() {
            return Err(Error::Invariant("tree block: backward before forward".into()));
        }
        let d_leaves = self.classifier.backward(d_logits)?;
        let widths = vec![self.unit_out; self.leaf_unit.len()];
        let mut d_out: Vec<Option<Tensor<T>>> = vec![None; self.units.len()];
        for (part, &k) in split_channels(&d_leaves, &widths)?.into_iter().zip(&self.leaf_unit) {
            d_out[k] = Some(part);
        }
        let [n, _, h, w] = self.unit_shapes[0];
        let mut d_x0 = Tensor::zeros([n, self.concat_channels, h, w])?;
        let mut d_bridge = None;
        for k in (0..self.units.len()).rev() {
            let g = d_out[k]
                .take()
                .ok_or_else(|| Error::Invariant(format!("tree unit {k} received no gradient")))?;
            let d_in = self.units[k].backward(&g)?;
            let src = if self.parent[k].is_some() { self.unit_out } else { self.bridge_channels };
            let mut parts = split_channels(&d_in, &[src, self.concat_channels])?;
            d_x0.add_assign(&parts[1])?;
            let d_src = parts.swap_remove(0);
            match self.parent[k] {
                Some(p) => match &mut d_out[p] {
                    Some(acc) => acc.add_assign(&d_src)?,
                    slot => *slot = Some(d_src),
                },
                None => d_bridge = Some(d_src),
            }
        }
        let d_bridge = d_bridge.ok_or_else(|| Error::Invariant("tree block has no root".into()))?;
        Ok((d_bridge, d_x0))
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for u in &mut self.units {
            u.visit_params(f);
        }
        self.classifier.visit_params(f);
    }
}
