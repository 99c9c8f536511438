//! Adaptive tree-structured CNN segmentation for very-high-resolution aerial imagery.
//!
//! The crate is organised along the processing chain:
//!
//! 1. [`dataset`] ingests Potsdam-style patches (or generates synthetic scenes) and fuses
//!    them into five-channel `[R, G, B, IR, DSM]` images.
//! 2. [`geometry`] provides rotation augmentation with maximum inscribed square crops,
//!    overlap-tile planning with mirror extrapolation, and Gaussian-weighted stitching.
//! 3. [`nn`] is a small deterministic layer toolkit with explicit backward passes.
//! 4. [`network`] assembles a mini DeepUNet and the Tree-CNN block derived from a
//!    [`treecut::ClassTree`].
//! 5. [`metrics`] accumulates confusion matrices and derives the scores, and [`treecut`]
//!    turns the folded confusion into a class tree.
//! 6. [`trainer`] runs the iterated structure update until the tree stops changing.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod raster;
pub mod seeding;
pub mod trainer;
pub mod treecut;

pub use error::{Error, Result};
pub use raster::{Image, LabelMap, RgbImage};
