//! Dataset ingestion: label taxonomy, stereo manifests, PPM/PGM images,
//! resampling, Multi-FM feature sets and synthetic generators.

mod image;
mod manifest;
mod synth;

pub use image::{decode_image, decode_pnm, encode_pgm, encode_ppm, resize_image, RgbImage};
pub use manifest::{load_manifest, write_manifest, Manifest, StereoSample};
pub use synth::{synth_fmv, synth_images, write_image_dataset, StereoImagePair, SynthImageSpec, SynthSpec};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const GESTURES: [&str; 16] = [
    "start",
    "up",
    "end",
    "here",
    "take-photo",
    "four",
    "carry",
    "tessellation",
    "two",
    "down",
    "one",
    "backward",
    "three",
    "five",
    "number-delimiter",
    "boat",
];
const POSES: [&str; 3] = ["turning-horizontally", "turning-vertically", "free-swim"];
pub const NULL_LABEL: &str = "null";

/// Ordered class names. Index order is part of every on-disk format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTaxonomy {
    labels: Vec<String>,
}

impl LabelTaxonomy {
    /// The 20 diver classes: 16 gestures, 3 poses, then the null class.
    pub fn caddy() -> Self {
        let labels = GESTURES.iter().chain(POSES.iter()).chain([NULL_LABEL].iter()).map(|s| s.to_string()).collect();
        Self { labels }
    }

    /// `class0`, `class1`, ...
    pub fn numbered(n: usize) -> Self {
        Self { labels: (0..n).map(|i| format!("class{i}")).collect() }
    }

    /// The diver taxonomy for 20 classes, numbered names otherwise.
    pub fn for_classes(n: usize) -> Self {
        if n == 20 {
            Self::caddy()
        } else {
            Self::numbered(n)
        }
    }

    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        let mut sorted = labels.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!("duplicate label {:?}", w[0])));
        }
        Ok(Self { labels })
    }

    pub fn gestures() -> &'static [&'static str] {
        &GESTURES
    }

    pub fn poses() -> &'static [&'static str] {
        &POSES
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Multi-FM rows with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub class_names: Vec<String>,
    pub dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

const FMV_MAGIC: &[u8; 4] = b"DFMV";
const FMV_VERSION: u16 = 1;

impl FeatureSet {
    pub fn new(class_names: Vec<String>, dim: usize) -> Self {
        Self { class_names, dim, features: Vec::new(), labels: Vec::new() }
    }

    pub fn push(&mut self, row: &[f64], label: usize) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::LengthMismatch { expected: self.dim, found: row.len() });
        }
        if label >= self.class_names.len() {
            return Err(Error::LabelOutOfRange { label, n: self.class_names.len() });
        }
        self.features.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureSet {
        let mut out = FeatureSet::new(self.class_names.clone(), self.dim);
        for &i in indices {
            out.features.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// Flat binary form: `b"DFMV"`, u16 version, u32 rows, u32 dim,
    /// u32 class count, class names as u16 length + UTF-8, then per row a
    /// u32 label followed by `dim` f64 values. Little-endian throughout.
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(32 + self.features.len() * 8 + self.labels.len() * 4);
        buf.extend_from_slice(FMV_MAGIC);
        buf.extend_from_slice(&FMV_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.class_names.len() as u32).to_le_bytes());
        for name in &self.class_names {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
        }
        for i in 0..self.len() {
            buf.extend_from_slice(&(self.labels[i] as u32).to_le_bytes());
            for v in self.row(i) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptFile(format!("feature file: {m}"));
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos + n;
            if end > bytes.len() {
                return Err(corrupt("unexpected end of data"));
            }
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != FMV_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != FMV_VERSION {
            return Err(corrupt("unsupported version"));
        }
        let rows = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let n_classes = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut names = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            names.push(String::from_utf8(take(len)?.to_vec()).map_err(|_| corrupt("class name is not UTF-8"))?);
        }
        let mut out = FeatureSet::new(names, dim);
        let mut row = vec![0.0; dim];
        for _ in 0..rows {
            let label = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            for v in row.iter_mut() {
                *v = f64::from_le_bytes(take(8)?.try_into().unwrap());
            }
            out.push(&row, label).map_err(|_| corrupt("label out of range"))?;
        }
        if pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}
