//! Rotation about the image center and the maximum axis-aligned square that fits
//! inside a rotated square.
//!
//! Pixel `(r, c)` has its center at `(c - (W-1)/2, r - (H-1)/2)` relative to the
//! image center. A positive angle turns the content counter-clockwise as displayed
//! (rows pointing down).

use crate::error::{Error, Result};
use crate::raster::{Image, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

/// Rotation angle with its inscribed crop for a square source of side `source_side`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationCrop {
    pub angle_deg: f64,
    pub source_side: usize,
    pub crop_side: usize,
}

impl RotationCrop {
    pub fn new(source_side: usize, angle_deg: f64) -> Self {
        Self {
            angle_deg,
            source_side,
            crop_side: max_inscribed_square_side(source_side, angle_deg),
        }
    }
}

/// `floor(L / (|cos θ| + |sin θ|))` with θ folded into `[0°, 90°)`.
pub fn max_inscribed_square_side(source_side: usize, angle_deg: f64) -> usize {
    let folded = angle_deg.rem_euclid(90.0).to_radians();
    let spread = folded.cos().abs() + folded.sin().abs();
    ((source_side as f64 / spread).floor() as usize).min(source_side)
}

/// Source-space sampling position of output pixel `(r, c)` for an `out_h × out_w`
/// window sharing the source center.
#[inline]
fn source_coords(
    r: usize,
    c: usize,
    out_h: usize,
    out_w: usize,
    src_h: usize,
    src_w: usize,
    cos: f64,
    sin: f64,
) -> (f64, f64) {
    let x = c as f64 - (out_w as f64 - 1.0) / 2.0;
    let y = r as f64 - (out_h as f64 - 1.0) / 2.0;
    // Inverse rotation: output offset back into the source frame.
    let sx = cos * x - sin * y;
    let sy = sin * x + cos * y;
    (
        sy + (src_h as f64 - 1.0) / 2.0,
        sx + (src_w as f64 - 1.0) / 2.0,
    )
}

fn trig(angle_deg: f64) -> (f64, f64) {
    // Exact values at quarter turns keep nearest sampling free of rounding drift.
    let folded = angle_deg.rem_euclid(360.0);
    for (q, cs) in [(0.0, (1.0, 0.0)), (90.0, (0.0, 1.0)), (180.0, (-1.0, 0.0)), (270.0, (0.0, -1.0))] {
        if (folded - q).abs() < 1e-12 {
            return cs;
        }
    }
    let t = angle_deg.to_radians();
    (t.cos(), t.sin())
}

const EDGE_EPS: f64 = 1e-9;

fn sample_nearest(plane: &[f32], h: usize, w: usize, sr: f64, sc: f64) -> Option<f32> {
    let r = (sr + EDGE_EPS).round();
    let c = (sc + EDGE_EPS).round();
    if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
        return None;
    }
    Some(plane[r as usize * w + c as usize])
}

fn sample_bilinear(plane: &[f32], h: usize, w: usize, sr: f64, sc: f64) -> Option<f32> {
    if sr < -EDGE_EPS || sc < -EDGE_EPS || sr > h as f64 - 1.0 + EDGE_EPS || sc > w as f64 - 1.0 + EDGE_EPS {
        return None;
    }
    let sr = sr.clamp(0.0, h as f64 - 1.0);
    let sc = sc.clamp(0.0, w as f64 - 1.0);
    let r0 = sr.floor() as usize;
    let c0 = sc.floor() as usize;
    let r1 = (r0 + 1).min(h - 1);
    let c1 = (c0 + 1).min(w - 1);
    let fr = sr - r0 as f64;
    let fc = sc - c0 as f64;
    let v = |r: usize, c: usize| plane[r * w + c] as f64;
    let top = v(r0, c0) * (1.0 - fc) + v(r0, c1) * fc;
    let bottom = v(r1, c0) * (1.0 - fc) + v(r1, c1) * fc;
    Some((top * (1.0 - fr) + bottom * fr) as f32)
}

/// Rotates into an `out_h × out_w` window centered on the source center. Samples
/// falling outside the source are filled with 0.
pub fn rotate_into(
    image: &Image,
    angle_deg: f64,
    out_h: usize,
    out_w: usize,
    mode: Interpolation,
) -> Result<Image> {
    let (cos, sin) = trig(angle_deg);
    let (h, w) = (image.height(), image.width());
    let mut out = Image::new(image.channels(), out_h, out_w)?;
    for ch in 0..image.channels() {
        let src = image.plane(ch);
        let dst = out.plane_mut(ch);
        for r in 0..out_h {
            for c in 0..out_w {
                let (sr, sc) = source_coords(r, c, out_h, out_w, h, w, cos, sin);
                let v = match mode {
                    Interpolation::Nearest => sample_nearest(src, h, w, sr, sc),
                    Interpolation::Bilinear => sample_bilinear(src, h, w, sr, sc),
                };
                dst[r * out_w + c] = v.unwrap_or(0.0);
            }
        }
    }
    Ok(out)
}

/// Same-size rotation about the center.
pub fn rotate(image: &Image, angle_deg: f64, mode: Interpolation) -> Result<Image> {
    rotate_into(image, angle_deg, image.height(), image.width(), mode)
}

/// Label maps only admit nearest sampling; unsampled pixels get label 0.
pub fn rotate_labels_into(
    labels: &LabelMap,
    angle_deg: f64,
    out_h: usize,
    out_w: usize,
    mode: Interpolation,
) -> Result<LabelMap> {
    if mode == Interpolation::Bilinear {
        return Err(Error::InvalidArgument(
            "label maps must be rotated with nearest-neighbour sampling".into(),
        ));
    }
    let (cos, sin) = trig(angle_deg);
    let (h, w) = (labels.height(), labels.width());
    let mut data = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        for c in 0..out_w {
            let (sr, sc) = source_coords(r, c, out_h, out_w, h, w, cos, sin);
            let sr = (sr + EDGE_EPS).round();
            let sc = (sc + EDGE_EPS).round();
            let v = if sr < 0.0 || sc < 0.0 || sr >= h as f64 || sc >= w as f64 {
                0
            } else {
                labels.get(sr as usize, sc as usize)
            };
            data.push(v);
        }
    }
    LabelMap::from_vec(out_h, out_w, data)
}

pub fn rotate_labels(labels: &LabelMap, angle_deg: f64, mode: Interpolation) -> Result<LabelMap> {
    rotate_labels_into(labels, angle_deg, labels.height(), labels.width(), mode)
}

/// One augmented sample.
#[derive(Debug, Clone)]
pub struct AugmentedPair {
    pub crop: RotationCrop,
    pub image: Image,
    pub labels: LabelMap,
}

pub const AUGMENT_STEP_DEG: u32 = 10;

/// Rotations at 0°, 10°, …, 350°, each cropped to the largest axis-aligned square
/// that stays inside the rotated source. Images use bilinear sampling, labels nearest.
pub fn augment_rotations(image: &Image, labels: &LabelMap) -> Result<Vec<AugmentedPair>> {
    if image.height() != image.width() {
        return Err(Error::Shape(format!(
            "augmentation needs a square image, got {}x{}",
            image.height(),
            image.width()
        )));
    }
    if labels.height() != image.height() || labels.width() != image.width() {
        return Err(Error::Shape(format!(
            "labels are {}x{} but the image is {}x{}",
            labels.height(),
            labels.width(),
            image.height(),
            image.width()
        )));
    }
    let side = image.height();
    if side < 2 {
        return Err(Error::Shape("augmentation needs an image of side 2 or more".into()));
    }
    (0..360 / AUGMENT_STEP_DEG)
        .map(|k| {
            let crop = RotationCrop::new(side, (k * AUGMENT_STEP_DEG) as f64);
            let s = crop.crop_side;
            Ok(AugmentedPair {
                crop,
                image: rotate_into(image, crop.angle_deg, s, s, Interpolation::Bilinear)?,
                labels: rotate_labels_into(labels, crop.angle_deg, s, s, Interpolation::Nearest)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_vec(1, h, w, (0..h * w).map(|v| v as f32 + 1.0).collect()).unwrap()
    }

    /// All four corners of the centered `s × s` square, turned into the source frame,
    /// lie inside the `L × L` source square.
    fn crop_fits(l: usize, s: usize, deg: f64) -> bool {
        let t = deg.to_radians();
        let half = s as f64 / 2.0;
        let lim = l as f64 / 2.0 + 1e-9;
        [(-half, -half), (-half, half), (half, -half), (half, half)]
            .iter()
            .all(|&(x, y)| {
                let sx = t.cos() * x - t.sin() * y;
                let sy = t.sin() * x + t.cos() * y;
                sx.abs() <= lim && sy.abs() <= lim
            })
    }

    fn containment_oracle(l: usize, deg: f64) -> usize {
        (0..=l).rev().find(|&s| crop_fits(l, s, deg)).unwrap()
    }

    #[test]
    fn spot_values() {
        assert_eq!(max_inscribed_square_side(6000, 0.0), 6000);
        assert_eq!(max_inscribed_square_side(6000, 45.0), 4242);
        assert_eq!(max_inscribed_square_side(6000, 10.0), 5179);
        assert_eq!(max_inscribed_square_side(6000, 90.0), 6000);
        assert_eq!(max_inscribed_square_side(600, 90.0), 600);
        for l in [1, 7, 100, 601] {
            for k in 0..36 {
                let deg = k as f64 * 10.0;
                assert_eq!(max_inscribed_square_side(l, deg), containment_oracle(l, deg), "L={l} θ={deg}");
            }
        }
    }

    #[test]
    fn zero_angle_is_identity() {
        let img = ramp(5, 7);
        assert_eq!(rotate(&img, 0.0, Interpolation::Bilinear).unwrap(), img);
        assert_eq!(rotate(&img, 0.0, Interpolation::Nearest).unwrap(), img);
    }

    #[test]
    fn half_turn_flips_both_axes() {
        for (h, w) in [(5, 5), (4, 6), (3, 8)] {
            let img = ramp(h, w);
            let out = rotate(&img, 180.0, Interpolation::Nearest).unwrap();
            for r in 0..h {
                for c in 0..w {
                    assert_eq!(out.get(0, r, c), img.get(0, h - 1 - r, w - 1 - c));
                }
            }
        }
    }

    #[test]
    fn quarter_turn_and_back() {
        let img = ramp(9, 9);
        let there = rotate(&img, 90.0, Interpolation::Nearest).unwrap();
        let back = rotate(&there, -90.0, Interpolation::Nearest).unwrap();
        assert_eq!(back, img);
        let there = rotate(&img, 90.0, Interpolation::Bilinear).unwrap();
        let back = rotate(&there, -90.0, Interpolation::Bilinear).unwrap();
        for r in 1..8 {
            for c in 1..8 {
                assert!((back.get(0, r, c) - img.get(0, r, c)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn positive_angle_is_counter_clockwise() {
        // Bright pixel to the right of center moves to above center.
        let mut img = Image::new(1, 5, 5).unwrap();
        img.set(0, 2, 4, 1.0);
        let out = rotate(&img, 90.0, Interpolation::Nearest).unwrap();
        assert_eq!(out.get(0, 0, 2), 1.0);
    }

    #[test]
    fn out_of_source_fills_zero() {
        let img = Image::filled(1, 10, 10, 3.0).unwrap();
        let out = rotate(&img, 45.0, Interpolation::Bilinear).unwrap();
        assert_eq!(out.get(0, 0, 0), 0.0);
        assert_eq!(out.get(0, 5, 5), 3.0);
    }

    #[test]
    fn labels_reject_bilinear() {
        let labels = LabelMap::filled(4, 4, 1).unwrap();
        assert!(rotate_labels(&labels, 10.0, Interpolation::Bilinear).is_err());
        assert_eq!(rotate_labels(&labels, 0.0, Interpolation::Nearest).unwrap(), labels);
    }

    #[test]
    fn augmentation_count_and_crops() {
        let side = 60;
        let img = Image::filled(2, side, side, 7.0).unwrap();
        let labels = LabelMap::filled(side, side, 3).unwrap();
        let pairs = augment_rotations(&img, &labels).unwrap();
        assert_eq!(pairs.len(), 36);
        assert_eq!(pairs[0].image, img);
        assert_eq!(pairs[0].labels, labels);
        assert_eq!(pairs[9].crop.crop_side, side);
        for p in &pairs {
            assert_eq!(p.image.height(), p.crop.crop_side);
            assert!(p.image.data().iter().all(|&v| (v - 7.0).abs() < 1e-4), "θ={}", p.crop.angle_deg);
            assert!(p.labels.data().iter().all(|&v| v == 3));
        }
    }

    #[test]
    fn augmentation_rejects_non_square() {
        let img = Image::new(1, 4, 5).unwrap();
        let labels = LabelMap::filled(4, 5, 1).unwrap();
        assert!(augment_rotations(&img, &labels).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inscribed_square_fits_and_is_maximal(l in 2usize..10_000, deg in -720.0f64..720.0) {
                let s = max_inscribed_square_side(l, deg);
                prop_assert!(s <= l);
                prop_assert!(super::crop_fits(l, s, deg));
                if s < l {
                    // One more pixel would poke out, up to floating-point slack at the boundary.
                    prop_assert!(!super::crop_fits(l, s + 2, deg));
                }
            }
        }
    }
}
