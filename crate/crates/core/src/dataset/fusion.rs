//! Five-channel fusion `[R, G, B, IR, DSM]` and label color palettes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::default_class_names;
use crate::raster::{Image, LabelMap, RgbImage};

use super::io;
use super::manifest::{Modality, PatchRecord};

pub const FUSED_CHANNELS: usize = 5;
pub const DSM_CHANNEL: usize = 4;

/// Whatever imagery is on hand for one patch. Channel values are in `[0, 255]`
/// except DSM, which is raw elevation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Modalities<'a> {
    pub rgb: Option<&'a Image>,
    /// Channel order IR, R, G.
    pub irrg: Option<&'a Image>,
    pub rgbir: Option<&'a Image>,
    pub dsm: Option<&'a Image>,
}

pub fn fuse_channels(m: Modalities<'_>) -> Result<Image> {
    let dsm = m
        .dsm
        .ok_or_else(|| Error::Data("DSM is required for channel fusion".into()))?;
    let expect = |img: &Image, channels: usize, what: &str| -> Result<()> {
        if img.channels() != channels {
            return Err(Error::Shape(format!(
                "{what} has {} channels, expected {channels}",
                img.channels()
            )));
        }
        if img.height() != dsm.height() || img.width() != dsm.width() {
            return Err(Error::Shape(format!(
                "{what} is {}x{} but the DSM is {}x{}",
                img.height(),
                img.width(),
                dsm.height(),
                dsm.width()
            )));
        }
        Ok(())
    };
    expect(dsm, 1, "DSM")?;
    let (r, g, b, ir) = if let Some(rgbir) = m.rgbir {
        expect(rgbir, 4, "RGBIR")?;
        (rgbir.plane(0), rgbir.plane(1), rgbir.plane(2), rgbir.plane(3))
    } else if let (Some(rgb), Some(irrg)) = (m.rgb, m.irrg) {
        expect(rgb, 3, "RGB")?;
        expect(irrg, 3, "IRRG")?;
        (rgb.plane(0), rgb.plane(1), rgb.plane(2), irrg.plane(0))
    } else {
        return Err(Error::Data(
            "fusion needs RGBIR, or both RGB and IRRG".into(),
        ));
    };
    Image::from_planes(&[r, g, b, ir, dsm.plane(0)], dsm.height(), dsm.width())
}

/// Class colors, index 0 holding class 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    pub names: Vec<String>,
    pub colors: Vec<[u8; 3]>,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            names: default_class_names(6),
            colors: vec![
                [255, 255, 255],
                [0, 0, 255],
                [0, 255, 255],
                [0, 255, 0],
                [255, 255, 0],
                [255, 0, 0],
            ],
        }
    }
}

impl Palette {
    pub fn new(names: Vec<String>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if names.len() != colors.len() || colors.len() < 2 || colors.len() > 255 {
            return Err(Error::InvalidArgument(format!(
                "palette needs 2..=255 classes with one name per color, got {} names and {} colors",
                names.len(),
                colors.len()
            )));
        }
        for (k, c) in colors.iter().enumerate() {
            if colors[..k].contains(c) {
                return Err(Error::InvalidArgument(format!("palette color {c:?} appears twice")));
            }
        }
        Ok(Self { names, colors })
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

pub fn labels_from_colors(image: &RgbImage, palette: &Palette) -> Result<LabelMap> {
    let mut data = Vec::with_capacity(image.height() * image.width());
    for row in 0..image.height() {
        for col in 0..image.width() {
            let px = image.get(row, col);
            let k = palette.colors.iter().position(|c| *c == px).ok_or(Error::UnknownColor {
                r: px[0],
                g: px[1],
                b: px[2],
                row,
                col,
            })?;
            data.push(k as u8 + 1);
        }
    }
    LabelMap::from_vec(image.height(), image.width(), data)
}

pub fn labels_to_colors(labels: &LabelMap, palette: &Palette) -> Result<RgbImage> {
    labels.validate(palette.len())?;
    let mut data = Vec::with_capacity(labels.data().len() * 3);
    for &l in labels.data() {
        data.extend_from_slice(&palette.colors[l as usize - 1]);
    }
    RgbImage::from_vec(labels.height(), labels.width(), data)
}

/// Reads a label file: PGM holds indices directly, anything else is decoded as a
/// color PPM through `palette`.
pub fn read_labels(path: &std::path::Path, palette: &Palette) -> Result<LabelMap> {
    let labels = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        io::read_pgm(path)?
    } else {
        labels_from_colors(&io::read_ppm(path)?, palette)?
    };
    labels.validate(palette.len())?;
    Ok(labels)
}

/// Loads and fuses one record, plus its labels when present.
pub fn load_patch(record: &PatchRecord, palette: &Palette) -> Result<(Image, Option<LabelMap>)> {
    let path = |m: Modality| record.files.get(&m);
    let rgbir = path(Modality::Rgbir).map(|p| io::read_rgbir(p)).transpose()?;
    let (rgb, irrg) = if rgbir.is_none() {
        (
            path(Modality::Rgb).map(|p| io::read_ppm(p).map(|i| i.to_image())).transpose()?,
            path(Modality::Irrg).map(|p| io::read_ppm(p).map(|i| i.to_image())).transpose()?,
        )
    } else {
        (None, None)
    };
    let dsm = path(Modality::Dsm).map(|p| io::read_f32r(p)).transpose()?;
    let fused = fuse_channels(Modalities {
        rgb: rgb.as_ref(),
        irrg: irrg.as_ref(),
        rgbir: rgbir.as_ref(),
        dsm: dsm.as_ref(),
    })
    .map_err(|e| Error::Data(format!("patch {}: {e}", record.id)))?;
    let labels = path(Modality::Gt).map(|p| read_labels(p, palette)).transpose()?;
    if let Some(l) = &labels {
        if l.height() != fused.height() || l.width() != fused.width() {
            return Err(Error::Data(format!("patch {}: labels differ in size from imagery", record.id)));
        }
    }
    Ok((fused, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(h: usize, w: usize, seed: u32) -> Vec<f32> {
        (0..h * w).map(|k| ((k as u32 * 37 + seed * 11) % 256) as f32).collect()
    }

    #[test]
    fn rgbir_passthrough() {
        let (h, w) = (3, 4);
        let p: Vec<Vec<f32>> = (0..4).map(|s| plane(h, w, s)).collect();
        let rgbir = Image::from_planes(&[&p[0], &p[1], &p[2], &p[3]], h, w).unwrap();
        let dsm = Image::from_vec(1, h, w, (0..12).map(|v| v as f32 * -1.5).collect()).unwrap();
        let fused = fuse_channels(Modalities {
            rgbir: Some(&rgbir),
            dsm: Some(&dsm),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(fused.channels(), 5);
        assert_eq!(&fused.data()[..4 * h * w], rgbir.data());
        assert_eq!(fused.plane(4), dsm.plane(0));
    }

    #[test]
    fn both_paths_agree() {
        let (h, w) = (5, 2);
        let (r, g, b, ir) = (plane(h, w, 1), plane(h, w, 2), plane(h, w, 3), plane(h, w, 4));
        let rgbir = Image::from_planes(&[&r, &g, &b, &ir], h, w).unwrap();
        let rgb = Image::from_planes(&[&r, &g, &b], h, w).unwrap();
        let irrg = Image::from_planes(&[&ir, &r, &g], h, w).unwrap();
        let dsm = Image::filled(1, h, w, 42.5).unwrap();
        let a = fuse_channels(Modalities { rgbir: Some(&rgbir), dsm: Some(&dsm), ..Default::default() }).unwrap();
        let b = fuse_channels(Modalities {
            rgb: Some(&rgb),
            irrg: Some(&irrg),
            dsm: Some(&dsm),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fusion_errors() {
        let rgbir = Image::new(4, 2, 2).unwrap();
        assert!(fuse_channels(Modalities { rgbir: Some(&rgbir), ..Default::default() }).is_err());
        let dsm = Image::new(1, 2, 3).unwrap();
        assert!(fuse_channels(Modalities { rgbir: Some(&rgbir), dsm: Some(&dsm), ..Default::default() }).is_err());
        let dsm = Image::new(1, 2, 2).unwrap();
        let rgb = Image::new(3, 2, 2).unwrap();
        assert!(fuse_channels(Modalities { rgb: Some(&rgb), dsm: Some(&dsm), ..Default::default() }).is_err());
    }

    #[test]
    fn palette_round_trip() {
        let p = Palette::default();
        let white = RgbImage::filled(3, 3, [255, 255, 255]).unwrap();
        assert!(labels_from_colors(&white, &p).unwrap().data().iter().all(|&l| l == 1));
        let labels = LabelMap::from_vec(2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let colors = labels_to_colors(&labels, &p).unwrap();
        assert_eq!(colors.get(1, 2), [255, 0, 0]);
        assert_eq!(labels_from_colors(&colors, &p).unwrap(), labels);
    }

    #[test]
    fn unknown_color_names_pixel() {
        let mut img = RgbImage::filled(2, 2, [0, 0, 255]).unwrap();
        img.set(0, 0, [1, 2, 3]);
        match labels_from_colors(&img, &Palette::default()) {
            Err(Error::UnknownColor { row: 0, col: 0, r: 1, g: 2, b: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn palette_rejects_duplicates() {
        assert!(Palette::new(vec!["a".into(), "b".into()], vec![[1, 1, 1], [1, 1, 1]]).is_err());
    }
}
