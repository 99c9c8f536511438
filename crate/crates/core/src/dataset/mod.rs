//! Potsdam-style ingestion and synthetic stand-in data.

mod fusion;
pub mod io;
mod manifest;
mod synth;

pub use fusion::{
    fuse_channels, labels_from_colors, labels_to_colors, load_patch, read_labels, Modalities, Palette,
    DSM_CHANNEL, FUSED_CHANNELS,
};
pub use manifest::{
    build_manifest, build_manifest_excluding, parse_patch_name, scan_directory, split_train_val, Manifest,
    Modality, PatchId, PatchRecord, DEFAULT_EXCLUDED, VALIDATION_PATCHES,
};
pub use synth::{
    generate_synthetic_scene, BUILDING, CAR, CLUTTER, IMP_SURF, LOW_VEG, MIN_SIDE, TREE,
    TREE_LOW_VEG_KL_BOUND,
};

use serde::{Deserialize, Serialize};

use crate::raster::{Image, LabelMap};

/// A fused image with its reference labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub image: Image,
    pub labels: LabelMap,
}

/// Cuts non-overlapping `tile × tile` training samples from each scene, row-major,
/// dropping any remainder at the right and bottom.
pub fn cut_tiles(scenes: &[Sample], tile: usize) -> crate::Result<Vec<Sample>> {
    let mut out = Vec::new();
    for s in scenes {
        for r in (0..=s.image.height().saturating_sub(tile)).step_by(tile.max(1)) {
            for c in (0..=s.image.width().saturating_sub(tile)).step_by(tile.max(1)) {
                if r + tile > s.image.height() || c + tile > s.image.width() {
                    continue;
                }
                out.push(Sample {
                    image: s.image.crop(r, c, tile, tile)?,
                    labels: s.labels.crop(r, c, tile, tile)?,
                });
            }
        }
    }
    Ok(out)
}

/// Synthetic train/validation data: training scenes are cut into tiles, validation
/// scenes stay whole for tiled inference. Scene seeds never overlap between the two.
pub fn synthetic_split(
    seed: u64,
    train_scenes: usize,
    val_scenes: usize,
    scene_side: usize,
    tile: usize,
) -> crate::Result<(Vec<Sample>, Vec<Sample>)> {
    let scene = |k: u64| -> crate::Result<Sample> {
        let (image, labels) = generate_synthetic_scene(crate::seeding::derive(seed, "scene", &[k]), scene_side, scene_side)?;
        Ok(Sample { image, labels })
    };
    let train: Vec<Sample> = (0..train_scenes as u64).map(scene).collect::<crate::Result<_>>()?;
    let val = (0..val_scenes as u64)
        .map(|k| scene(train_scenes as u64 + k))
        .collect::<crate::Result<_>>()?;
    Ok((cut_tiles(&train, tile)?, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_from_scenes() {
        let (train, val) = synthetic_split(1, 2, 1, 128, 64).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(val.len(), 1);
        assert_eq!(train[0].image.height(), 64);
        assert_eq!(val[0].image.width(), 128);
        let again = synthetic_split(1, 2, 1, 128, 64).unwrap();
        assert_eq!(train, again.0);
    }
}
