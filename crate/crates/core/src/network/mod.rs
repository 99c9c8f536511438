//! Segmentation network: a small DeepUNet encoder/decoder whose full-resolution
//! features pass through a batch norm into either a plain 1×1 classifier or a
//! Tree-CNN block built from a class tree.

mod blocks;
mod model;
mod spec;
mod tree_block;

pub use blocks::{DownBlock, ResNextSpec, ResNextUnit, UpBlock};
pub use model::{is_segmentation_param, Head, LayerCensus, TreeSegNet};
pub use spec::{NetworkSpec, ALLOWED_FIRST_CONV_CHANNELS, DEFAULT_INPUT_SCALE};
pub use tree_block::TreeCnnBlock;
