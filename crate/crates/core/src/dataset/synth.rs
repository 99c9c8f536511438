//! Deterministic synthetic scenes with the six Potsdam classes.
//!
//! Appearance per class, as mean `[R, G, B, IR]` with a per-pixel standard deviation,
//! and height above a gently sloping ground in the DSM channel:
//!
//! | class    | R   | G   | B   | IR  | sd | height                         |
//! |----------|-----|-----|-----|-----|----|--------------------------------|
//! | imp_surf | 150 | 148 | 145 | 95  | 22 | 0 ± 0.3                        |
//! | building | 180 | 110 | 95  | 120 | 22 | 6..12 per roof ± 0.4           |
//! | low_veg  | 95  | 140 | 72  | 172 | 20 | 0.3 ± 0.6                      |
//! | tree     | 88  | 132 | 68  | 182 | 20 | dome, 2..6 at the crown ± 0.9  |
//! | car      | one of four paints | 80  | 18 | 1.5 ± 0.2                      |
//! | clutter  | 140 | 122 | 100 | 110 | 30 | 0.5 ± 0.8                      |
//!
//! Every object also carries a random tint (sd 8 per channel). Tree and low
//! vegetation differ by about half a standard deviation in each color channel
//! ([`TREE_LOW_VEG_KL_BOUND`]), so crown edges, where the dome is low, are hard to
//! tell apart from grass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::{Image, LabelMap};
use crate::seeding;

use super::fusion::FUSED_CHANNELS;

pub const IMP_SURF: u8 = 1;
pub const BUILDING: u8 = 2;
pub const LOW_VEG: u8 = 3;
pub const TREE: u8 = 4;
pub const CAR: u8 = 5;
pub const CLUTTER: u8 = 6;

pub const MIN_SIDE: usize = 32;

/// Upper bound on the Gaussian KL divergence between the tree and low_veg color
/// distributions, summed over R, G, B and IR.
pub const TREE_LOW_VEG_KL_BOUND: f64 = 0.5;

struct Look {
    mean: [f32; 4],
    sd: f32,
}

const LOOKS: [Look; 6] = [
    Look { mean: [150.0, 148.0, 145.0, 95.0], sd: 22.0 },
    Look { mean: [180.0, 110.0, 95.0, 120.0], sd: 22.0 },
    Look { mean: [95.0, 140.0, 72.0, 172.0], sd: 20.0 },
    Look { mean: [88.0, 132.0, 68.0, 182.0], sd: 20.0 },
    Look { mean: [0.0, 0.0, 0.0, 80.0], sd: 18.0 },
    Look { mean: [140.0, 122.0, 100.0, 110.0], sd: 30.0 },
];

const CAR_PAINT: [[f32; 3]; 4] = [
    [210.0, 40.0, 40.0],
    [40.0, 60.0, 200.0],
    [235.0, 235.0, 235.0],
    [30.0, 30.0, 35.0],
];

/// Target area fraction per class, painted in this order; imp_surf takes the rest.
const LAYERS: [(u8, f64); 5] = [
    (LOW_VEG, 0.38),
    (CLUTTER, 0.20),
    (BUILDING, 0.23),
    (TREE, 0.20),
    (CAR, 0.05),
];

struct Canvas {
    h: usize,
    w: usize,
    label: Vec<u8>,
    object: Vec<u32>,
    height: Vec<f32>,
    /// Per object: color mean after tint, color sd, height noise sd.
    objects: Vec<([f32; 4], f32, f32)>,
}

impl Canvas {
    fn count(&self, class: u8) -> usize {
        self.label.iter().filter(|&&l| l == class).count()
    }

    fn new_object(&mut self, rng: &mut ChaCha8Rng, class: u8, base: [f32; 4], height_sd: f32) -> u32 {
        let tint = Normal::new(0.0f32, 8.0).unwrap();
        let mut mean = base;
        for v in &mut mean {
            *v += tint.sample(rng);
        }
        self.objects.push((mean, LOOKS[class as usize - 1].sd, height_sd));
        (self.objects.len() - 1) as u32
    }

    fn paint(&mut self, r: usize, c: usize, class: u8, object: u32, height: f32) {
        let i = r * self.w + c;
        self.label[i] = class;
        self.object[i] = object;
        self.height[i] = height;
    }

    fn disc(&mut self, cy: f64, cx: f64, radius: f64, class: u8, object: u32, height: impl Fn(f64) -> f32) {
        let r0 = (cy - radius).floor().max(0.0) as usize;
        let r1 = ((cy + radius).ceil() as usize).min(self.h - 1);
        let c0 = (cx - radius).floor().max(0.0) as usize;
        let c1 = ((cx + radius).ceil() as usize).min(self.w - 1);
        if cy + radius < 0.0 || cx + radius < 0.0 {
            return;
        }
        for r in r0..=r1 {
            for c in c0..=c1 {
                let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
                if d <= radius {
                    self.paint(r, c, class, object, height(d / radius));
                }
            }
        }
    }

    fn rect(&mut self, r: usize, c: usize, rh: usize, rw: usize, class: u8, object: u32, height: f32) {
        for rr in r..(r + rh).min(self.h) {
            for cc in c..(c + rw).min(self.w) {
                self.paint(rr, cc, class, object, height);
            }
        }
    }
}

fn blob(canvas: &mut Canvas, rng: &mut ChaCha8Rng, class: u8, scale: f64, height: f32, height_sd: f32) {
    let (h, w) = (canvas.h as f64, canvas.w as f64);
    let obj = canvas.new_object(rng, class, LOOKS[class as usize - 1].mean, height_sd);
    let (cy, cx) = (rng.gen_range(0.0..h), rng.gen_range(0.0..w));
    let side = h.min(w);
    for _ in 0..rng.gen_range(3..=7) {
        let rad = side * scale * rng.gen_range(0.5..1.0);
        let oy = cy + rng.gen_range(-1.0..1.0) * side * scale;
        let ox = cx + rng.gen_range(-1.0..1.0) * side * scale;
        canvas.disc(oy, ox, rad, class, obj, |_| height);
    }
}

fn tree_cluster(canvas: &mut Canvas, rng: &mut ChaCha8Rng) {
    let side = canvas.h.min(canvas.w) as f64;
    let (cy, cx) = (rng.gen_range(0.0..canvas.h as f64), rng.gen_range(0.0..canvas.w as f64));
    for _ in 0..rng.gen_range(2..=5) {
        let obj = canvas.new_object(rng, TREE, LOOKS[TREE as usize - 1].mean, 0.9);
        let rad = side * rng.gen_range(0.03..0.07);
        let crown: f32 = rng.gen_range(2.0..6.0);
        let oy = cy + rng.gen_range(-1.5..1.5) * rad;
        let ox = cx + rng.gen_range(-1.5..1.5) * rad;
        canvas.disc(oy, ox, rad.max(2.0), TREE, obj, |t| crown * (1.0 - (t * t) as f32));
    }
}

fn building(canvas: &mut Canvas, rng: &mut ChaCha8Rng) {
    let (h, w) = (canvas.h, canvas.w);
    let rh = rng.gen_range(h * 15 / 100..=h * 35 / 100).max(4);
    let rw = rng.gen_range(w * 15 / 100..=w * 35 / 100).max(4);
    let r = rng.gen_range(0..h - rh / 2);
    let c = rng.gen_range(0..w - rw / 2);
    let roof: f32 = rng.gen_range(6.0..12.0);
    let obj = canvas.new_object(rng, BUILDING, LOOKS[BUILDING as usize - 1].mean, 0.4);
    canvas.rect(r, c, rh, rw, BUILDING, obj, roof);
}

fn car(canvas: &mut Canvas, rng: &mut ChaCha8Rng) {
    let (long, short) = (rng.gen_range(7..=10), rng.gen_range(3..=5));
    let (rh, rw) = if rng.gen_bool(0.5) { (long, short) } else { (short, long) };
    let r = rng.gen_range(0..canvas.h.saturating_sub(rh).max(1));
    let c = rng.gen_range(0..canvas.w.saturating_sub(rw).max(1));
    let paint = CAR_PAINT[rng.gen_range(0..CAR_PAINT.len())];
    let base = [paint[0], paint[1], paint[2], LOOKS[CAR as usize - 1].mean[3]];
    let obj = canvas.new_object(rng, CAR, base, 0.2);
    canvas.rect(r, c, rh, rw, CAR, obj, 1.5);
}

/// A `(5 × H × W image, labels)` pair that depends only on `(seed, height, width)`.
pub fn generate_synthetic_scene(seed: u64, height: usize, width: usize) -> Result<(Image, LabelMap)> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::InvalidArgument(format!(
            "synthetic scenes need sides of at least {MIN_SIDE}, got {height}x{width}"
        )));
    }
    let mut rng = seeding::rng(seed, "synthetic-scene", &[height as u64, width as u64]);
    let n = height * width;
    let mut canvas = Canvas {
        h: height,
        w: width,
        label: vec![IMP_SURF; n],
        object: vec![0; n],
        height: vec![0.0; n],
        objects: Vec::new(),
    };
    canvas.new_object(&mut rng, IMP_SURF, LOOKS[0].mean, 0.3);

    for (class, target) in LAYERS {
        let goal = (target * n as f64) as usize;
        for _ in 0..400 {
            if canvas.count(class) >= goal {
                break;
            }
            match class {
                LOW_VEG => blob(&mut canvas, &mut rng, LOW_VEG, 0.10, 0.3, 0.6),
                CLUTTER => blob(&mut canvas, &mut rng, CLUTTER, 0.05, 0.5, 0.8),
                BUILDING => building(&mut canvas, &mut rng),
                TREE => tree_cluster(&mut canvas, &mut rng),
                _ => car(&mut canvas, &mut rng),
            }
        }
    }

    let ground = [
        rng.gen_range(0.0f32..2.0),
        rng.gen_range(-1.0f32..1.0) / height as f32,
        rng.gen_range(-1.0f32..1.0) / width as f32,
    ];
    let unit = Normal::new(0.0f32, 1.0).unwrap();
    let mut data = vec![0.0f32; FUSED_CHANNELS * n];
    for i in 0..n {
        let (mean, sd, hsd) = canvas.objects[canvas.object[i] as usize];
        for ch in 0..4 {
            data[ch * n + i] = (mean[ch] + sd * unit.sample(&mut rng)).clamp(0.0, 255.0).round();
        }
        let (r, c) = ((i / width) as f32, (i % width) as f32);
        let terrain = ground[0] + ground[1] * r * 2.0 + ground[2] * c * 2.0;
        data[4 * n + i] = terrain + canvas.height[i] + hsd * unit.sample(&mut rng);
    }
    Ok((
        Image::from_vec(FUSED_CHANNELS, height, width, data)?,
        LabelMap::from_vec(height, width, canvas.label)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn histogram(labels: &LabelMap) -> [usize; 6] {
        let mut h = [0; 6];
        for &l in labels.data() {
            h[l as usize - 1] += 1;
        }
        h
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_scene(11, 64, 48).unwrap();
        let b = generate_synthetic_scene(11, 64, 48).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_synthetic_scene(12, 64, 48).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn too_small_rejected() {
        assert!(generate_synthetic_scene(0, 31, 64).is_err());
    }

    #[test]
    fn channel_ranges() {
        let (img, labels) = generate_synthetic_scene(3, 40, 40).unwrap();
        assert_eq!(img.channels(), 5);
        labels.validate(6).unwrap();
        for ch in 0..4 {
            assert!(img.plane(ch).iter().all(|v| (0.0..=255.0).contains(v)));
        }
    }

    #[test]
    fn at_least_five_classes_at_128() {
        for seed in 0..100 {
            let (_, labels) = generate_synthetic_scene(seed, 128, 128).unwrap();
            let present = histogram(&labels).iter().filter(|&&c| c > 0).count();
            assert!(present >= 5, "seed {seed}: {:?}", histogram(&labels));
        }
    }

    #[test]
    fn classes_roughly_balanced() {
        let mut total = [0usize; 6];
        for seed in 0..20 {
            let (_, labels) = generate_synthetic_scene(seed, 128, 128).unwrap();
            for (t, h) in total.iter_mut().zip(histogram(&labels)) {
                *t += h;
            }
        }
        let n: usize = total.iter().sum();
        let fractions: Vec<f64> = total.iter().map(|&t| t as f64 / n as f64).collect();
        for f in &fractions {
            assert!((0.03..0.32).contains(f), "class fractions {fractions:.3?}");
        }
    }

    /// Gaussian KL divergence summed over the four color channels, per ordered class pair.
    fn color_kl(a: u8, b: u8) -> f64 {
        let mut stats = [[(0.0f64, 0.0f64, 0usize); 4]; 2];
        for seed in 0..10 {
            let (img, labels) = generate_synthetic_scene(seed, 96, 96).unwrap();
            for (i, &l) in labels.data().iter().enumerate() {
                let k = if l == a { 0 } else if l == b { 1 } else { continue };
                for ch in 0..4 {
                    let v = img.plane(ch)[i] as f64;
                    let s = &mut stats[k][ch];
                    s.0 += v;
                    s.1 += v * v;
                    s.2 += 1;
                }
            }
        }
        (0..4)
            .map(|ch| {
                let moments = |s: (f64, f64, usize)| {
                    let m = s.0 / s.2 as f64;
                    (m, s.1 / s.2 as f64 - m * m)
                };
                let (m1, v1) = moments(stats[0][ch]);
                let (m2, v2) = moments(stats[1][ch]);
                0.5 * ((v1 / v2) + (m1 - m2).powi(2) / v2 - 1.0 + (v2 / v1).ln())
            })
            .sum()
    }

    #[test]
    fn tree_and_low_veg_overlap_most() {
        let kl = color_kl(TREE, LOW_VEG);
        assert!(kl < TREE_LOW_VEG_KL_BOUND, "tree/low_veg KL {kl}");
        for (a, b) in [(IMP_SURF, CLUTTER), (BUILDING, CLUTTER), (IMP_SURF, BUILDING), (LOW_VEG, CLUTTER)] {
            let other = color_kl(a, b);
            assert!(other > kl, "classes {a}/{b}: KL {other} vs tree/low_veg {kl}");
        }
    }
}
