use serde::{Deserialize, Serialize};

use crate::dataset::FUSED_CHANNELS;
use crate::error::{Error, Result};
use crate::treecut::ClassTree;

use super::blocks::ResNextSpec;

pub const ALLOWED_FIRST_CONV_CHANNELS: [usize; 3] = [16, 32, 64];

/// Per-channel multipliers applied to raw fused tiles before the first convolution:
/// color and IR in `0..=255` map to `0..=1`, heights in metres are divided by ten.
pub const DEFAULT_INPUT_SCALE: [f64; FUSED_CHANNELS] = [1.0 / 255.0, 1.0 / 255.0, 1.0 / 255.0, 1.0 / 255.0, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub depth: usize,
    pub first_conv_channels: usize,
    pub base_channels: Vec<usize>,
    pub resnext: ResNextSpec,
    pub num_classes: usize,
    /// `None` builds the plain network: bridge norm, then a 1×1 conv to the logits.
    pub class_tree: Option<ClassTree>,
    pub input_scale: Vec<f64>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            depth: 3,
            first_conv_channels: 64,
            base_channels: vec![16, 32, 64],
            resnext: ResNextSpec::default(),
            num_classes: 6,
            class_tree: None,
            input_scale: DEFAULT_INPUT_SCALE.to_vec(),
        }
    }
}

impl NetworkSpec {
    pub fn with_tree(mut self, tree: Option<ClassTree>) -> Self {
        self.class_tree = tree;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidArgument("network depth must be at least 1".into()));
        }
        if self.base_channels.len() != self.depth {
            return Err(Error::InvalidArgument(format!(
                "{} base channel widths given for depth {}",
                self.base_channels.len(),
                self.depth
            )));
        }
        if self.base_channels.contains(&0) || self.first_conv_channels == 0 {
            return Err(Error::InvalidArgument("channel counts must be positive".into()));
        }
        if self.num_classes < 2 || self.num_classes > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!("unsupported class count {}", self.num_classes)));
        }
        if self.input_scale.len() != FUSED_CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "input scale needs {FUSED_CHANNELS} entries, got {}",
                self.input_scale.len()
            )));
        }
        self.resnext.validate()?;
        if let Some(tree) = &self.class_tree {
            tree.validate(self.num_classes)?;
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate), but also restricts `K` to 16, 32 or 64.
    pub fn validate_strict(&self) -> Result<()> {
        self.validate()?;
        if !ALLOWED_FIRST_CONV_CHANNELS.contains(&self.first_conv_channels) {
            return Err(Error::InvalidArgument(format!(
                "first conv width {} is not one of {ALLOWED_FIRST_CONV_CHANNELS:?}",
                self.first_conv_channels
            )));
        }
        Ok(())
    }

    /// Tile sides must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treecut::parse_tree;

    #[test]
    fn json_round_trip_with_tree() {
        let spec = NetworkSpec::default().with_tree(Some(parse_tree("((1,2),((3,4),(5,6)))").unwrap()));
        let text = spec.to_json().unwrap();
        assert!(text.contains("((1,2),((3,4),(5,6)))"));
        assert_eq!(NetworkSpec::from_json(&text).unwrap(), spec);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = NetworkSpec::default();
        s.base_channels.pop();
        assert!(s.validate().is_err());

        let mut s = NetworkSpec::default();
        s.resnext.cardinality = 5;
        assert!(s.validate().is_err());

        let s = NetworkSpec::default().with_tree(Some(ClassTree::chain(5)));
        assert!(s.validate().is_err());

        let mut s = NetworkSpec::default();
        s.first_conv_channels = 24;
        assert!(s.validate().is_ok());
        assert!(s.validate_strict().is_err());
    }
}
