//! Seeded synthetic datasets for desk-scale checks.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{encode_ppm, write_manifest, FeatureSet, LabelTaxonomy, Manifest, RgbImage, StereoSample};
use crate::error::{Error, Result};

/// Gaussian clusters in feature space, one centroid per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Minimum pairwise centroid distance.
    pub margin: f64,
    /// Per-coordinate standard deviation around each centroid.
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub const DEFAULT_NOISE: f64 = 0.5;

    pub fn new(classes: usize, per_class: usize, dim: usize, margin: f64, seed: u64) -> Self {
        Self { classes, per_class, dim, margin, noise: Self::DEFAULT_NOISE, seed }
    }
}

/// Centroids drawn uniformly from a cube, rejecting any closer than
/// `margin` to an accepted one. The cube grows by 10% after 1000
/// consecutive rejections.
fn centroids(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut half = 0.75 * spec.margin;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    let mut misses = 0;
    while out.len() < spec.classes {
        let cand: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(-half..=half)).collect();
        let ok = out.iter().all(|c| {
            let d2: f64 = c.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= spec.margin
        });
        if ok {
            out.push(cand);
            misses = 0;
        } else {
            misses += 1;
            if misses == 1000 {
                half *= 1.1;
                misses = 0;
            }
        }
    }
    out
}

/// Multi-FM mode: `classes × per_class` rows in class-major order.
pub fn synth_fmv(spec: &SynthSpec) -> Result<FeatureSet> {
    if spec.margin <= 0.0 || !spec.margin.is_finite() {
        return Err(Error::InvalidConfig(format!("margin must be positive, got {}", spec.margin)));
    }
    if spec.classes == 0 || spec.dim == 0 {
        return Err(Error::InvalidConfig("need at least one class and one dimension".into()));
    }
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centres = centroids(spec, &mut rng);
    let mut set = FeatureSet::new(LabelTaxonomy::for_classes(spec.classes).labels().to_vec(), spec.dim);
    let mut row = vec![0.0; spec.dim];
    for (class, centre) in centres.iter().enumerate() {
        for _ in 0..spec.per_class {
            for (r, c) in row.iter_mut().zip(centre) {
                *r = c + noise.sample(&mut rng);
            }
            set.push(&row, class)?;
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthImageSpec {
    pub classes: usize,
    pub per_class: usize,
    pub side: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoImagePair {
    pub left: RgbImage,
    pub right: RgbImage,
    pub label: usize,
}

const GRID: usize = 4;

/// Image mode: every class owns a 4×4 on/off patch pattern and a colour.
/// Lit patches take the class colour with per-sample brightness jitter over
/// a dim noisy background. The right image is the left one shifted one
/// column to the left with wrap-around: `right[y][x] = left[y][(x+1) mod W]`.
pub fn synth_images(spec: &SynthImageSpec) -> Result<Vec<StereoImagePair>> {
    if spec.side < GRID {
        return Err(Error::InvalidConfig(format!("image side must be at least {GRID}")));
    }
    if spec.classes == 0 || spec.classes > 1 << (GRID * GRID - 1) {
        return Err(Error::InvalidConfig(format!("unsupported class count {}", spec.classes)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut patterns: Vec<u16> = Vec::with_capacity(spec.classes);
    while patterns.len() < spec.classes {
        let p: u16 = rng.random();
        if p.count_ones() >= 3 && patterns.iter().all(|q| (p ^ q).count_ones() >= 3) {
            patterns.push(p);
        }
    }
    let colours: Vec<[f64; 3]> = (0..spec.classes)
        .map(|_| [rng.random_range(0.4..1.0), rng.random_range(0.4..1.0), rng.random_range(0.4..1.0)])
        .collect();
    let side = spec.side;
    let mut pairs = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        for _ in 0..spec.per_class {
            let gain: f64 = rng.random_range(0.8..1.0);
            let mut left = RgbImage::filled(side, side, 0.0);
            for y in 0..side {
                for x in 0..side {
                    let cell = (y * GRID / side) * GRID + x * GRID / side;
                    let lit = patterns[class] >> cell & 1 == 1;
                    for c in 0..3 {
                        let base = if lit { colours[class][c] * gain } else { 0.0 };
                        left.set(y, x, c, (base + rng.random_range(0.0..0.15)).min(1.0));
                    }
                }
            }
            let mut right = RgbImage::filled(side, side, 0.0);
            for y in 0..side {
                for x in 0..side {
                    for c in 0..3 {
                        right.set(y, x, c, left.get(y, (x + 1) % side, c));
                    }
                }
            }
            pairs.push(StereoImagePair { left, right, label: class });
        }
    }
    Ok(pairs)
}

/// Writes `left/NNNNN.ppm`, `right/NNNNN.ppm` and `manifest.csv` under `dir`.
pub fn write_image_dataset(dir: impl AsRef<Path>, pairs: &[StereoImagePair], taxonomy: &LabelTaxonomy) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("left"))?;
    fs::create_dir_all(dir.join("right"))?;
    let mut samples = Vec::with_capacity(pairs.len());
    for (k, pair) in pairs.iter().enumerate() {
        let left = dir.join("left").join(format!("{k:05}.ppm"));
        let right = dir.join("right").join(format!("{k:05}.ppm"));
        fs::write(&left, encode_ppm(&pair.left))?;
        fs::write(&right, encode_ppm(&pair.right))?;
        samples.push(StereoSample { left, right, label: pair.label, location: "synthetic".into() });
    }
    let manifest = Manifest { taxonomy: taxonomy.clone(), samples, declared: None };
    write_manifest(dir.join("manifest.csv"), &manifest)?;
    Ok(manifest)
}
