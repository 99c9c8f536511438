//! Overlap tiles: planning, mirrored extraction and Gaussian-weighted stitching.
//!
//! A tile of side `T` carries a margin `m` of context on every border; only its
//! central `T - 2m` core is "valid". Cores are laid out with stride `T - 2m` from the
//! top-left, and the last row/column of cores is pulled back so it ends flush with
//! the far image border. Tile pixels outside the image are mirrored in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub height: usize,
    pub width: usize,
    pub tile: usize,
    pub margin: usize,
    /// Tile top-left corners in source coordinates, row-major from the top-left.
    pub origins: Vec<(i64, i64)>,
}

impl TilePlan {
    pub fn stride(&self) -> usize {
        self.tile - 2 * self.margin
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Half-open core rectangle `(row0, col0, row1, col1)` of tile `index` in source
    /// coordinates, clipped to the image.
    pub fn core(&self, index: usize) -> (usize, usize, usize, usize) {
        let (r, c) = self.origins[index];
        let m = self.margin as i64;
        let s = self.stride() as i64;
        let clip = |v: i64, hi: usize| v.clamp(0, hi as i64) as usize;
        (
            clip(r + m, self.height),
            clip(c + m, self.width),
            clip(r + m + s, self.height),
            clip(c + m + s, self.width),
        )
    }
}

fn axis_origins(extent: usize, tile: usize, margin: usize) -> Vec<i64> {
    let stride = tile - 2 * margin;
    let count = extent.div_ceil(stride).max(1);
    let m = margin as i64;
    (0..count)
        .map(|k| {
            if k + 1 == count && count > 1 {
                extent as i64 - stride as i64 - m
            } else {
                -m + (k * stride) as i64
            }
        })
        .collect()
}

pub fn plan_tiles(height: usize, width: usize, tile: usize, margin: usize) -> Result<TilePlan> {
    if tile <= 2 * margin {
        return Err(Error::InvalidArgument(format!(
            "tile side {tile} leaves no core with margin {margin}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("image must be non-empty".into()));
    }
    let rows = axis_origins(height, tile, margin);
    let cols = axis_origins(width, tile, margin);
    let origins = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    Ok(TilePlan {
        height,
        width,
        tile,
        margin,
        origins,
    })
}

/// Reflects an index into `0..n` about the borders without repeating the edge pixel.
pub fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let k = i.rem_euclid(period);
    if k < n as i64 {
        k as usize
    } else {
        (period - k) as usize
    }
}

pub fn extract_tile(image: &Image, plan: &TilePlan, index: usize) -> Result<Image> {
    let &(r0, c0) = plan.origins.get(index).ok_or_else(|| {
        Error::InvalidArgument(format!("tile {index} out of range for {} tiles", plan.len()))
    })?;
    if image.height() != plan.height || image.width() != plan.width {
        return Err(Error::Shape(format!(
            "plan is for {}x{} but image is {}x{}",
            plan.height,
            plan.width,
            image.height(),
            image.width()
        )));
    }
    let t = plan.tile;
    let rows: Vec<usize> = (0..t).map(|k| reflect_index(r0 + k as i64, plan.height)).collect();
    let cols: Vec<usize> = (0..t).map(|k| reflect_index(c0 + k as i64, plan.width)).collect();
    let mut out = Image::new(image.channels(), t, t)?;
    for ch in 0..image.channels() {
        let src = image.plane(ch);
        let dst = out.plane_mut(ch);
        for (tr, &sr) in rows.iter().enumerate() {
            for (tc, &sc) in cols.iter().enumerate() {
                dst[tr * t + tc] = src[sr * plan.width + sc];
            }
        }
    }
    Ok(out)
}

/// Per-pixel blending weights for one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub side: usize,
    pub sigma: f64,
    /// Gaussian center in normalized tile coordinates.
    pub center: (f64, f64),
    weights: Vec<f64>,
}

impl WeightMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.side + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.weights
    }
}

pub const DEFAULT_SIGMA: f64 = 0.5;

/// Maps a pixel index to `[-1, 1]`, tile center at 0.
pub fn normalized_coord(k: usize, side: usize) -> f64 {
    if side == 1 {
        0.0
    } else {
        2.0 * k as f64 / (side - 1) as f64 - 1.0
    }
}

/// `g(x, y) = 1/(2πσ²) · exp(-(x² + y²) / (2σ²))` over normalized coordinates.
pub fn gaussian_value(x: f64, y: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(x * x + y * y) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
}

pub fn gaussian_weight_map(side: usize, sigma: f64) -> Result<WeightMap> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if side == 0 {
        return Err(Error::InvalidArgument("tile side must be positive".into()));
    }
    let mut weights = Vec::with_capacity(side * side);
    for r in 0..side {
        let y = normalized_coord(r, side);
        for c in 0..side {
            weights.push(gaussian_value(normalized_coord(c, side), y, sigma));
        }
    }
    Ok(WeightMap {
        side,
        sigma,
        center: (0.0, 0.0),
        weights,
    })
}

/// Folds tiles into a full-size map in ascending tile order. Tile pixels that land
/// outside the image are dropped.
pub struct StitchAccumulator<'a> {
    plan: &'a TilePlan,
    weight: &'a WeightMap,
    channels: usize,
    sum: Vec<f64>,
    norm: Vec<f64>,
    next: usize,
}

impl<'a> StitchAccumulator<'a> {
    pub fn new(plan: &'a TilePlan, weight: &'a WeightMap, channels: usize) -> Result<Self> {
        if weight.side != plan.tile {
            return Err(Error::Shape(format!(
                "weight map side {} does not match tile side {}",
                weight.side, plan.tile
            )));
        }
        let n = plan.height * plan.width;
        Ok(Self {
            plan,
            weight,
            channels,
            sum: vec![0.0; channels * n],
            norm: vec![0.0; n],
            next: 0,
        })
    }

    pub fn push(&mut self, tile: &Image) -> Result<()> {
        let index = self.next;
        let plan = self.plan;
        if index >= plan.len() {
            return Err(Error::InvalidArgument(format!(
                "plan has only {} tiles",
                plan.len()
            )));
        }
        let t = plan.tile;
        if tile.height() != t || tile.width() != t || tile.channels() != self.channels {
            return Err(Error::Shape(format!(
                "tile {index} is {}x{}x{}, expected {}x{t}x{t}",
                tile.channels(),
                tile.height(),
                tile.width(),
                self.channels
            )));
        }
        let (r0, c0) = plan.origins[index];
        let n = plan.height * plan.width;
        for tr in 0..t {
            let r = r0 + tr as i64;
            if r < 0 || r >= plan.height as i64 {
                continue;
            }
            for tc in 0..t {
                let c = c0 + tc as i64;
                if c < 0 || c >= plan.width as i64 {
                    continue;
                }
                let w = self.weight.get(tr, tc);
                let p = r as usize * plan.width + c as usize;
                self.norm[p] += w;
                for ch in 0..self.channels {
                    self.sum[ch * n + p] += w * tile.plane(ch)[tr * t + tc] as f64;
                }
            }
        }
        self.next += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<Image> {
        if self.next != self.plan.len() {
            return Err(Error::InvalidArgument(format!(
                "received {} of {} tiles",
                self.next,
                self.plan.len()
            )));
        }
        let n = self.plan.height * self.plan.width;
        let mut data = vec![0.0f32; self.channels * n];
        for ch in 0..self.channels {
            for p in 0..n {
                data[ch * n + p] = (self.sum[ch * n + p] / self.norm[p]) as f32;
            }
        }
        Image::from_vec(self.channels, self.plan.height, self.plan.width, data)
    }
}

/// `Σ w·s / Σ w` over all tiles covering each pixel.
pub fn stitch(tiles: &[Image], plan: &TilePlan, weight: &WeightMap) -> Result<Image> {
    if tiles.len() != plan.len() {
        return Err(Error::InvalidArgument(format!(
            "{} tiles supplied for a plan of {}",
            tiles.len(),
            plan.len()
        )));
    }
    let channels = tiles.first().map(Image::channels).unwrap_or(1);
    let mut acc = StitchAccumulator::new(plan, weight, channels)?;
    for t in tiles {
        acc.push(t)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn covered_everywhere(plan: &TilePlan) -> bool {
        let mut hit = vec![false; plan.height * plan.width];
        for k in 0..plan.len() {
            let (r0, c0, r1, c1) = plan.core(k);
            for r in r0..r1 {
                for c in c0..c1 {
                    hit[r * plan.width + c] = true;
                }
            }
        }
        hit.into_iter().all(|h| h)
    }

    #[test]
    fn full_scale_plan() {
        let p = plan_tiles(6000, 6000, 640, 80).unwrap();
        assert_eq!(p.stride(), 480);
        assert_eq!(p.len(), 169);
        assert_eq!(p.origins[0], (-80, -80));
        assert_eq!(p.origins[168], (6000 - 480 - 80, 6000 - 480 - 80));
        assert!(covered_everywhere(&p));
    }

    #[test]
    fn thousand_pixel_plan() {
        let p = plan_tiles(1000, 1000, 640, 80).unwrap();
        assert_eq!(p.len(), 9);
        let (_, _, r1, c1) = p.core(8);
        assert_eq!((r1, c1), (1000, 1000));
        assert!(covered_everywhere(&p));
    }

    #[test]
    fn single_tile_plan() {
        let p = plan_tiles(64, 64, 64, 0).unwrap();
        assert_eq!(p.origins, vec![(0, 0)]);
        assert!(plan_tiles(64, 64, 16, 8).is_err());
    }

    #[test]
    fn coverage_exhaustive_small() {
        for (t, m) in [(8, 2), (6, 1), (5, 0), (7, 3)] {
            for h in (t - 2 * m)..=3 * t {
                for w in (t - 2 * m)..=3 * t {
                    let p = plan_tiles(h, w, t, m).unwrap();
                    assert!(covered_everywhere(&p), "H={h} W={w} T={t} m={m}");
                }
            }
        }
    }

    #[test]
    fn reflection() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-3, 5), 3);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(9, 5), 1);
        assert_eq!(reflect_index(-7, 1), 0);
    }

    #[test]
    fn corner_tile_mirrors() {
        let img = Image::from_vec(1, 20, 20, (0..400).map(|v| v as f32).collect()).unwrap();
        let plan = plan_tiles(20, 20, 12, 3).unwrap();
        let tile = extract_tile(&img, &plan, 0).unwrap();
        // Oracle: explicitly reflect-pad the image by the margin.
        let m = 3usize;
        let padded = |r: usize, c: usize| {
            let rr = (r as i64 - m as i64).unsigned_abs() as usize;
            let cc = (c as i64 - m as i64).unsigned_abs() as usize;
            img.get(0, rr, cc)
        };
        for r in 0..12 {
            for c in 0..12 {
                assert_eq!(tile.get(0, r, c), padded(r, c));
            }
        }
        assert_eq!(tile.get(0, 0, 0), img.get(0, 3, 3));
        assert!(extract_tile(&img, &plan, plan.len()).is_err());
    }

    #[test]
    fn interior_tile_is_verbatim() {
        let img = Image::from_vec(2, 30, 30, (0..1800).map(|v| v as f32).collect()).unwrap();
        let plan = plan_tiles(30, 30, 10, 2).unwrap();
        let k = plan.origins.iter().position(|&(r, c)| r >= 0 && c >= 0 && r + 10 <= 30 && c + 10 <= 30).unwrap();
        let (r, c) = plan.origins[k];
        assert_eq!(extract_tile(&img, &plan, k).unwrap(), img.crop(r as usize, c as usize, 10, 10).unwrap());
    }

    #[test]
    fn one_pixel_wide_reflection() {
        let img = Image::from_vec(1, 4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let plan = plan_tiles(4, 1, 4, 1).unwrap();
        for k in 0..plan.len() {
            let tile = extract_tile(&img, &plan, k).unwrap();
            for r in 0..4 {
                let row: Vec<f32> = (0..4).map(|c| tile.get(0, r, c)).collect();
                assert!(row.iter().all(|&v| v == row[0]));
            }
        }
    }

    #[test]
    fn gaussian_values() {
        let w = gaussian_weight_map(5, 0.5).unwrap();
        assert!((w.get(2, 2) - 0.636620).abs() < 1e-6);
        // column 3 of 5 sits at x = 0.5: 0.636620 * exp(-0.5)
        assert!((w.get(2, 3) - 0.386129).abs() < 1e-6);
        for r in 0..5 {
            for c in 0..5 {
                assert_eq!(w.get(r, c), w.get(4 - r, c));
                assert_eq!(w.get(r, c), w.get(r, 4 - c));
                assert!(w.get(r, c) > 0.0);
            }
        }
        assert!(gaussian_weight_map(5, 0.0).is_err());
        assert!(gaussian_weight_map(5, -1.0).is_err());
    }

    #[test]
    fn weights_decrease_with_radius() {
        for side in [6, 7, 64] {
            let w = gaussian_weight_map(side, DEFAULT_SIGMA).unwrap();
            let mut by_radius: Vec<(f64, f64)> = (0..side * side)
                .map(|k| {
                    let (r, c) = (k / side, k % side);
                    let x = normalized_coord(c, side);
                    let y = normalized_coord(r, side);
                    (x * x + y * y, w.get(r, c))
                })
                .collect();
            by_radius.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for pair in by_radius.windows(2) {
                if pair[1].0 > pair[0].0 + 1e-12 {
                    assert!(pair[1].1 < pair[0].1);
                }
            }
        }
    }

    #[test]
    fn stitch_constant_and_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (h, w) = (37, 23);
        let data: Vec<f32> = (0..2 * h * w).map(|_| rng.gen::<f32>()).collect();
        let img = Image::from_vec(2, h, w, data).unwrap();
        let plan = plan_tiles(h, w, 16, 3).unwrap();
        let weight = gaussian_weight_map(16, DEFAULT_SIGMA).unwrap();
        let tiles: Vec<Image> = (0..plan.len()).map(|k| extract_tile(&img, &plan, k).unwrap()).collect();
        let out = stitch(&tiles, &plan, &weight).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        let constant: Vec<Image> = (0..plan.len()).map(|_| Image::filled(1, 16, 16, 0.25).unwrap()).collect();
        let out = stitch(&constant, &plan, &weight).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.25).abs() <= 1e-6));
        assert!(stitch(&constant[1..], &plan, &weight).is_err());
    }

    #[test]
    fn single_tile_stitch_is_identity() {
        let plan = plan_tiles(8, 8, 8, 0).unwrap();
        let weight = gaussian_weight_map(8, DEFAULT_SIGMA).unwrap();
        let tile = Image::from_vec(1, 8, 8, (0..64).map(|v| v as f32 / 64.0).collect()).unwrap();
        let out = stitch(std::slice::from_ref(&tile), &plan, &weight).unwrap();
        for (a, b) in out.data().iter().zip(tile.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_plan() -> impl Strategy<Value = (usize, usize, usize, usize)> {
            (1usize..80, 1usize..80, 2usize..40)
                .prop_flat_map(|(h, w, t)| (Just(h), Just(w), Just(t), 0..=(t - 1) / 2))
        }

        proptest! {
            #[test]
            fn cores_cover_and_align((h, w, t, m) in arb_plan()) {
                let plan = plan_tiles(h, w, t, m).unwrap();
                prop_assert!(plan.stride() >= 1);
                prop_assert!(super::covered_everywhere(&plan));
                let last = plan.origins.last().unwrap();
                if h > plan.stride() {
                    prop_assert_eq!(last.0 + (m + plan.stride()) as i64, h as i64);
                }
                if w > plan.stride() {
                    prop_assert_eq!(last.1 + (m + plan.stride()) as i64, w as i64);
                }
            }

            #[test]
            fn weights_positive_centered_symmetric(side in 1usize..40, sigma in 0.2f64..2.0) {
                let map = gaussian_weight_map(side, sigma).unwrap();
                let peak = map.values().iter().cloned().fold(f64::MIN, f64::max);
                for r in 0..side {
                    for c in 0..side {
                        let v = map.get(r, c);
                        prop_assert!(v > 0.0);
                        prop_assert_eq!(v, map.get(c, r));
                        let mirrored = map.get(side - 1 - r, c);
                        prop_assert!((v - mirrored).abs() <= 1e-12 * v);
                    }
                }
                let mid = (side - 1) / 2;
                prop_assert!(peak - map.get(mid, mid) <= 1e-12 * peak);
            }

            #[test]
            fn reflect_stays_in_range(i in -500i64..500, n in 1usize..50) {
                let r = reflect_index(i, n);
                prop_assert!(r < n);
                if (0..n as i64).contains(&i) {
                    prop_assert_eq!(r as i64, i);
                }
            }
        }
    }
}
