//! End-to-end helpers: stereo image files to Multi-FM rows, single-pair
//! prediction, and per-stage latency measurement.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::backbone::{fuse_stereo, BackboneConfig, BackboneWeights, MultiFM};
use crate::dataio::{decode_image, resize_image, FeatureSet, Manifest, RgbImage, StereoSample};
use crate::error::{Error, Result};
use crate::metrics::quantile;
use crate::tensor::FeatureMap3;
use crate::treeclf::{Prediction, TrainedTree};

/// Decodes both images of a pair.
pub fn decode_pair(left: &Path, right: &Path) -> Result<(RgbImage, RgbImage)> {
    Ok((decode_image(left)?, decode_image(right)?))
}

/// Resizes both images to the backbone input side.
pub fn resize_pair(pair: &(RgbImage, RgbImage), cfg: &BackboneConfig) -> (FeatureMap3, FeatureMap3) {
    (resize_image(&pair.0, cfg.input_size), resize_image(&pair.1, cfg.input_size))
}

pub fn pair_features(left: &Path, right: &Path, cfg: &BackboneConfig, weights: &BackboneWeights) -> Result<MultiFM> {
    let (l, r) = resize_pair(&decode_pair(left, right)?, cfg);
    fuse_stereo(&l, &r, cfg, weights)
}

/// Multi-FM rows for every manifest sample, in manifest order.
pub fn featurize(manifest: &Manifest, cfg: &BackboneConfig, weights: &BackboneWeights, jobs: usize) -> Result<FeatureSet> {
    let run = || -> Result<Vec<MultiFM>> {
        manifest
            .samples
            .par_iter()
            .map(|s| pair_features(&s.left, &s.right, cfg, weights))
            .collect()
    };
    let rows = if jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run)?
    } else {
        manifest
            .samples
            .iter()
            .map(|s| pair_features(&s.left, &s.right, cfg, weights))
            .collect::<Result<Vec<_>>>()?
    };
    let mut set = FeatureSet::new(manifest.taxonomy.labels().to_vec(), cfg.multi_fm_len()?);
    for (row, s) in rows.iter().zip(&manifest.samples) {
        set.push(row.as_slice(), s.label)?;
    }
    Ok(set)
}

pub fn predict_pair(left: &Path, right: &Path, cfg: &BackboneConfig, weights: &BackboneWeights, tree: &TrainedTree) -> Result<Prediction> {
    tree.predict(pair_features(left, right, cfg, weights)?.as_slice())
}

const WARMUP: usize = 10;

pub const STAGES: [&str; 4] = ["decode", "resize", "extract", "route"];

#[derive(Debug, Clone, PartialEq)]
pub struct StageStats {
    pub name: String,
    pub median_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub reps: usize,
    pub stages: Vec<StageStats>,
    pub total: StageStats,
}

impl BenchReport {
    pub fn render(&self) -> String {
        let mut out = String::from("stage,median_ms,p95_ms\n");
        for s in self.stages.iter().chain(std::iter::once(&self.total)) {
            out.push_str(&format!("{},{:.4},{:.4}\n", s.name, s.median_ms, s.p95_ms));
        }
        out
    }
}

fn stats(name: &str, mut samples: Vec<f64>) -> StageStats {
    samples.sort_by(f64::total_cmp);
    StageStats { name: name.to_string(), median_ms: quantile(&samples, 0.5), p95_ms: quantile(&samples, 0.95) }
}

/// Times the full per-pair prediction path `reps` times, cycling through
/// `samples`, and reports median and 95th percentile per stage. A few
/// untimed passes run first to warm caches.
pub fn bench(
    samples: &[StereoSample],
    cfg: &BackboneConfig,
    weights: &BackboneWeights,
    tree: &TrainedTree,
    reps: usize,
) -> Result<BenchReport> {
    if samples.is_empty() || reps == 0 {
        return Err(Error::InvalidConfig("bench needs at least one sample and one repetition".into()));
    }
    for s in samples.iter().cycle().take(WARMUP.min(reps)) {
        let (l, r) = resize_pair(&decode_pair(&s.left, &s.right)?, cfg);
        std::hint::black_box(tree.predict(fuse_stereo(&l, &r, cfg, weights)?.as_slice())?);
    }
    let mut times = vec![Vec::with_capacity(reps); STAGES.len() + 1];
    for r in 0..reps {
        let s = &samples[r % samples.len()];
        let t0 = Instant::now();
        let decoded = decode_pair(&s.left, &s.right)?;
        let t1 = Instant::now();
        let (l, rt) = resize_pair(&decoded, cfg);
        let t2 = Instant::now();
        let fm = fuse_stereo(&l, &rt, cfg, weights)?;
        let t3 = Instant::now();
        std::hint::black_box(tree.predict(fm.as_slice())?);
        let t4 = Instant::now();
        let marks = [t0, t1, t2, t3, t4];
        for k in 0..STAGES.len() {
            times[k].push((marks[k + 1] - marks[k]).as_secs_f64() * 1e3);
        }
        times[STAGES.len()].push((t4 - t0).as_secs_f64() * 1e3);
    }
    let total = stats("total", times.pop().unwrap());
    let stages = STAGES.iter().zip(times).map(|(n, t)| stats(n, t)).collect();
    Ok(BenchReport { reps, stages, total })
}
