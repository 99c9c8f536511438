//! Simple raster containers used in place of TIFF.
//!
//! * RGB-like images: binary PPM (`P6`, maxval 255). A four-channel RGBIR image is two
//!   PPMs back to back in one file; the second carries IR in its first channel.
//! * Label maps: binary PGM (`P5`) holding class indices.
//! * Float rasters (DSM, fused tensors, score maps): `F32R` magic, then height, width
//!   and channel count as little-endian `u32`, then planar little-endian `f32` values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Image, LabelMap, RgbImage};

const F32R_MAGIC: &[u8; 4] = b"F32R";
const F32R_HEADER: usize = 16;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| self.err("number too large"))
    }

    /// Reads a netpbm header and returns `(width, height)`, leaving the cursor on the
    /// first raster byte.
    fn netpbm_header(&mut self, magic: &[u8; 2]) -> Result<(usize, usize)> {
        if self.bytes.get(self.pos..self.pos + 2) != Some(magic.as_slice()) {
            return Err(self.err(format!("expected magic {}", String::from_utf8_lossy(magic))));
        }
        self.pos += 2;
        let width = self.number()?;
        let height = self.number()?;
        let maxval = self.number()?;
        if maxval != 255 {
            return Err(self.err(format!("only maxval 255 is supported, got {maxval}")));
        }
        if width == 0 || height == 0 {
            return Err(self.err("zero image dimension"));
        }
        // exactly one whitespace byte separates the header from the raster
        if !self.bytes.get(self.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(self.err("missing whitespace after header"));
        }
        self.pos += 1;
        Ok((width, height))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| self.err(format!("truncated raster: need {n} bytes")))?;
        self.pos = end;
        Ok(out)
    }

    fn at_end(&self) -> bool {
        self.bytes[self.pos..].iter().all(u8::is_ascii_whitespace)
    }
}

/// Decodes one or more concatenated `P6` images.
pub fn decode_ppm(bytes: &[u8]) -> Result<Vec<RgbImage>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let mut out = Vec::new();
    loop {
        let (w, h) = cur.netpbm_header(b"P6")?;
        let raster = cur.take(w * h * 3)?;
        out.push(RgbImage::from_vec(h, w, raster.to_vec())?);
        if cur.at_end() {
            return Ok(out);
        }
        cur.skip_space_and_comments();
    }
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<LabelMap> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (w, h) = cur.netpbm_header(b"P5")?;
    let raster = cur.take(w * h)?;
    if !cur.at_end() {
        return Err(cur.err("trailing data after raster"));
    }
    LabelMap::from_vec(h, w, raster.to_vec())
}

pub fn encode_pgm(labels: &LabelMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", labels.width(), labels.height()).into_bytes();
    out.extend_from_slice(labels.data());
    out
}

pub fn decode_f32r(bytes: &[u8]) -> Result<Image> {
    let parse = |position, message: &str| Error::Parse {
        position,
        message: message.into(),
    };
    if bytes.len() < F32R_HEADER || &bytes[..4] != F32R_MAGIC {
        return Err(parse(0, "missing F32R header"));
    }
    let field = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (field(1), field(2), field(3));
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| parse(4, "dimensions overflow"))?;
    let payload = &bytes[F32R_HEADER..];
    if payload.len() != n * 4 {
        return Err(parse(
            F32R_HEADER,
            &format!("expected {} payload bytes for {c}x{h}x{w}, found {}", n * 4, payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Image::from_vec(c, h, w, data)
}

pub fn encode_f32r(image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(F32R_HEADER + image.data().len() * 4);
    out.extend_from_slice(F32R_MAGIC);
    for v in [image.height(), image.width(), image.channels()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in image.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Planar `[R, G, B, IR]` image in `[0, 255]` from a two-image PPM container.
pub fn decode_rgbir(bytes: &[u8]) -> Result<Image> {
    let images = decode_ppm(bytes)?;
    let [rgb, ir] = images.as_slice() else {
        return Err(Error::Parse {
            position: 0,
            message: format!("RGBIR container holds {} images, expected 2", images.len()),
        });
    };
    if rgb.height() != ir.height() || rgb.width() != ir.width() {
        return Err(Error::Shape("RGB and IR halves differ in size".into()));
    }
    let rgb = rgb.to_image();
    let ir = ir.to_image();
    Image::from_planes(
        &[rgb.plane(0), rgb.plane(1), rgb.plane(2), ir.plane(0)],
        rgb.height(),
        rgb.width(),
    )
}

pub fn encode_rgbir(image: &Image) -> Result<Vec<u8>> {
    if image.channels() != 4 {
        return Err(Error::Shape(format!("RGBIR needs 4 channels, got {}", image.channels())));
    }
    let zeros = vec![0.0; image.height() * image.width()];
    let ir = Image::from_planes(&[image.plane(3), &zeros, &zeros], image.height(), image.width())?;
    let mut out = encode_ppm(&RgbImage::from_image(image)?);
    out.extend(encode_ppm(&RgbImage::from_image(&ir)?));
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Rewrites in-memory parse errors so they name the file.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { position, message } => {
            Error::format(path, format!("byte {position}: {message}"))
        }
        Error::Shape(message) => Error::format(path, message),
        other => other,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let mut images = in_file(path, decode_ppm(&read(path)?))?;
    if images.len() != 1 {
        return Err(Error::format(path, format!("expected one image, found {}", images.len())));
    }
    Ok(images.remove(0))
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    write_bytes(path, &encode_ppm(image))
}

pub fn read_pgm(path: &Path) -> Result<LabelMap> {
    in_file(path, decode_pgm(&read(path)?))
}

pub fn write_pgm(path: &Path, labels: &LabelMap) -> Result<()> {
    write_bytes(path, &encode_pgm(labels))
}

pub fn read_f32r(path: &Path) -> Result<Image> {
    in_file(path, decode_f32r(&read(path)?))
}

pub fn write_f32r(path: &Path, image: &Image) -> Result<()> {
    write_bytes(path, &encode_f32r(image))
}

pub fn read_rgbir(path: &Path) -> Result<Image> {
    in_file(path, decode_rgbir(&read(path)?))
}

pub fn write_rgbir(path: &Path, image: &Image) -> Result<()> {
    write_bytes(path, &encode_rgbir(image)?)
}
