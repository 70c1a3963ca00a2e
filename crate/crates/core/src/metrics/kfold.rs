use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{report, ConfusionMatrix, MetricsReport};
use crate::dataio::FeatureSet;
use crate::error::{Error, Result};
use crate::treeclf::{train_tree, TrainConfig, TrainedTree, TreeTopology};

/// Shuffles `0..count` with a seeded generator and deals it into `k` folds.
/// The first `count mod k` folds hold one extra index. Indices address whole
/// stereo pairs, so a pair never straddles two folds.
pub fn kfold_split(count: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || count < k {
        return Err(Error::InvalidK { k, count });
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (count / k, count % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Anything that maps a feature vector to a class index.
pub trait Classifier {
    fn classify(&self, x: &[f64]) -> Result<usize>;
}

impl Classifier for TrainedTree {
    fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict(x)?.class)
    }
}

impl<F: Fn(&[f64]) -> usize> Classifier for F {
    fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(self(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub test_indices: Vec<usize>,
    pub predictions: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    /// Confusion over all out-of-fold predictions.
    pub confusion: ConfusionMatrix,
    pub aggregate: MetricsReport,
}

/// k-fold evaluation with a caller-supplied trainer. `train(fold, subset)`
/// is called once per fold with every sample outside that fold.
pub fn cross_validate_with<C, T>(data: &FeatureSet, k: usize, seed: u64, mut train: T) -> Result<CvResult>
where
    C: Classifier,
    T: FnMut(usize, &FeatureSet) -> Result<C>,
{
    let folds = kfold_split(data.len(), k, seed)?;
    let n = data.n_classes();
    let mut confusion = ConfusionMatrix::new(n);
    let mut results = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let wrap = |e: Error| Error::Fold { fold: f, source: Box::new(e) };
        let train_idx: Vec<usize> = folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
        let model = train(f, &data.subset(&train_idx)).map_err(wrap)?;
        let mut cm = ConfusionMatrix::new(n);
        let mut predictions = Vec::with_capacity(test.len());
        for &i in test {
            let p = model.classify(data.row(i)).map_err(wrap)?;
            cm.record(data.label(i), p).map_err(wrap)?;
            predictions.push(p);
        }
        confusion.merge(&cm);
        results.push(FoldResult { test_indices: test.clone(), predictions, report: report(&cm)?, confusion: cm });
    }
    Ok(CvResult { folds: results, aggregate: report(&confusion)?, confusion })
}

/// k-fold evaluation of a tree classifier. Fold `f` trains with seed
/// `cfg.seed + f`.
pub fn cross_validate(data: &FeatureSet, topology: &TreeTopology, cfg: &TrainConfig, k: usize, seed: u64) -> Result<CvResult> {
    cross_validate_with(data, k, seed, |fold, train| {
        let cfg = TrainConfig { seed: cfg.seed.wrapping_add(fold as u64), ..cfg.clone() };
        Ok(train_tree(topology, train, &cfg)?.0)
    })
}
