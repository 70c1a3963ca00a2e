use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::FeatureMap3;

/// An RGB image with values in `[0, 1]`, row-major with interleaved channels.
/// Unlike [`FeatureMap3`] it may be rectangular.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::shape(width * height * 3, data.len()));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height * 3] }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }
}

pub fn decode_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_pnm(&fs::read(path)?)
}

/// Decodes binary PPM (`P6`) or PGM (`P5`, replicated to three channels),
/// 8-bit samples only.
pub fn decode_pnm(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::UnsupportedFormat("not a PNM file".into()));
    }
    let channels = match bytes[1] {
        b'6' => 3,
        b'5' => 1,
        other => return Err(Error::UnsupportedFormat(format!("PNM variant P{}", other as char))),
    };
    let mut pos = 2;
    let width = header_number(bytes, &mut pos)?;
    let height = header_number(bytes, &mut pos)?;
    let maxval = header_number(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 {
        return Err(Error::CorruptHeader("maxval is zero".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("16-bit samples (maxval {maxval})")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::CorruptHeader("missing separator before payload".into())),
    }
    let expected = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload { expected, found: payload.len() });
    }
    let scale = maxval as f64;
    let data = if channels == 3 {
        payload[..expected].iter().map(|&b| b as f64 / scale).collect()
    } else {
        payload[..expected].iter().flat_map(|&b| [b as f64 / scale; 3]).collect()
    };
    Ok(RgbImage { width, height, data })
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::CorruptHeader("header ends early".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::CorruptHeader(format!("expected a number at byte {start}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .unwrap()
        .parse()
        .map_err(|_| Error::CorruptHeader("number out of range".into()))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| quantize(v)));
    out
}

/// Writes the first channel as a `P5` graymap.
pub fn encode_pgm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.chunks_exact(3).map(|px| quantize(px[0])));
    out
}

/// Source coordinate for target index `t` under the align-corners rule.
fn source_coord(t: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 {
        (src - 1) as f64 / 2.0
    } else {
        t as f64 * (src - 1) as f64 / (dst - 1) as f64
    }
}

/// Bilinear resampling to `target × target`, align-corners convention:
/// target index `t` samples source coordinate `t·(S−1)/(T−1)`, or the
/// centre `(S−1)/2` when `T = 1`.
pub fn resize_image(img: &RgbImage, target: usize) -> FeatureMap3 {
    assert!(target >= 1, "resize target must be positive");
    let mut out = FeatureMap3::zeros(target, 3);
    for i in 0..target {
        let sy = source_coord(i, img.height, target);
        let y0 = (sy.floor() as usize).min(img.height - 1);
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = sy - y0 as f64;
        for j in 0..target {
            let sx = source_coord(j, img.width, target);
            let x0 = (sx.floor() as usize).min(img.width - 1);
            let x1 = (x0 + 1).min(img.width - 1);
            let fx = sx - x0 as f64;
            for c in 0..3 {
                let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                let bottom = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.set(i, j, c, v.clamp(0.0, 1.0));
            }
        }
    }
    out
}
