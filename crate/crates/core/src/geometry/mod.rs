//! Augmentation and tiling geometry.

mod rotation;
mod tiling;

pub use rotation::{
    augment_rotations, max_inscribed_square_side, rotate, rotate_into, rotate_labels,
    rotate_labels_into, AugmentedPair, Interpolation, RotationCrop, AUGMENT_STEP_DEG,
};
pub use tiling::{
    extract_tile, gaussian_value, gaussian_weight_map, normalized_coord, plan_tiles,
    reflect_index, stitch, StitchAccumulator, TilePlan, WeightMap, DEFAULT_SIGMA,
};

/// Default overlap margin: one eighth of the tile side.
pub fn default_margin(tile: usize) -> usize {
    tile / 8
}
