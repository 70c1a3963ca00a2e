//! Confusion-matrix accounting and the per-class / overall measures:
//! precision, recall, F1 (per class and macro-averaged), true positive and
//! true negative rates, balanced class accuracy, and the correct
//! classification rate. Also box-plot summaries and k-fold evaluation.

mod kfold;

pub use kfold::{cross_validate, cross_validate_with, kfold_split, Classifier, CvResult, FoldResult};

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// `counts[t][p]` with rows indexed by true class, columns by prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, counts: vec![0; n * n] }
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        for label in [truth, pred] {
            if label >= self.n {
                return Err(Error::LabelOutOfRange { label, n: self.n });
            }
        }
        self.counts[truth * self.n + pred] += 1;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn tp(&self, i: usize) -> u64 {
        self.get(i, i)
    }

    pub fn fn_(&self, i: usize) -> u64 {
        (0..self.n).map(|p| self.get(i, p)).sum::<u64>() - self.tp(i)
    }

    pub fn fp(&self, i: usize) -> u64 {
        (0..self.n).map(|t| self.get(t, i)).sum::<u64>() - self.tp(i)
    }

    pub fn tn(&self, i: usize) -> u64 {
        self.total() - self.tp(i) - self.fn_(i) - self.fp(i)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n, other.n, "class counts differ");
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape(format!("{n}x{n}"), "ragged rows"));
        }
        Ok(Self { n, counts: rows.concat() })
    }
}

pub fn tally(truth: &[usize], pred: &[usize], n: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), found: pred.len() });
    }
    let mut cm = ConfusionMatrix::new(n);
    for (&t, &p) in truth.iter().zip(pred) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub bacc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    /// Percent of correctly classified samples.
    pub ccr: f64,
    pub n: usize,
}

/// `num / den`, or 0 when the denominator is 0.
fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let per_class: Vec<ClassMetrics> = (0..cm.n())
        .map(|i| {
            let (tp, fn_, fp, tn) = (cm.tp(i), cm.fn_(i), cm.fp(i), cm.tn(i));
            let precision = rate(tp, tp + fp);
            let recall = rate(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            let tnr = rate(tn, tn + fp);
            ClassMetrics { precision, recall, f1, tpr: recall, tnr, bacc: (recall + tnr) / 2.0 }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / cm.n() as f64;
    let correct: u64 = (0..cm.n()).map(|i| cm.tp(i)).sum();
    Ok(MetricsReport { per_class, macro_f1, ccr: 100.0 * correct as f64 / total as f64, n: cm.n() })
}

impl MetricsReport {
    pub fn min_bacc(&self) -> f64 {
        self.per_class.iter().map(|m| m.bacc).fold(f64::INFINITY, f64::min)
    }

    /// One row per class, then `summary,<macro_f1>,<ccr_percent>`.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("class,precision,recall,f1,tpr,tnr,bacc\n");
        for (name, m) in class_names.iter().zip(&self.per_class) {
            writeln!(
                out,
                "{name},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                m.precision, m.recall, m.f1, m.tpr, m.tnr, m.bacc
            )
            .unwrap();
        }
        writeln!(out, "summary,{:.6},{:.4}", self.macro_f1, self.ccr).unwrap();
        out
    }

    /// Box-plot rows for the per-class BACC and F1 distributions.
    pub fn box_stats_csv(&self) -> Result<String> {
        let bacc: Vec<f64> = self.per_class.iter().map(|m| m.bacc).collect();
        let f1: Vec<f64> = self.per_class.iter().map(|m| m.f1).collect();
        let mut out = String::from("metric,min,p25,median,p75,max\n");
        for (name, values) in [("bacc", bacc), ("f1", f1)] {
            let b = box_stats(&values)?;
            writeln!(out, "{name},{:.6},{:.6},{:.6},{:.6},{:.6}", b.min, b.p25, b.median, b.p75, b.max).unwrap();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

/// Linear-interpolation quantile at position `p·(n−1)` of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty list");
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(BoxStats {
        min: sorted[0],
        p25: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        p75: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}
