//! Layer forwards for the convolutional stack and the classifier heads.
//!
//! Convolution, ReLU and max pooling follow the usual sliding-window
//! definitions on square maps. Output sides are
//! `(N + 2p − V + s) / s` for convolution and `(N − Q + s) / s` for pooling;
//! geometry that does not divide exactly is rejected instead of floored.

pub(crate) mod head;

pub use head::{head_backward, sgd_momentum_step, Head, HeadArchitecture, HeadCache, HeadGrads, Momentum};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{index_of, FeatureMap3, Vector1};

/// Lower bound on the probability inside the cross-entropy logarithm.
pub const CE_EPSILON: f64 = 1e-12;

/// Output side of a convolution, or an error if the geometry is not exact.
pub fn conv_output_side(n_in: usize, v: usize, stride: usize, pad: usize) -> Result<usize> {
    if v == 0 || stride == 0 {
        return Err(Error::geometry(None, "filter size and stride must be positive"));
    }
    let padded = n_in + 2 * pad;
    if v > padded {
        return Err(Error::geometry(None, format!("filter {v} larger than padded input {padded}")));
    }
    let span = padded - v + stride;
    if !span.is_multiple_of(stride) {
        return Err(Error::geometry(
            None,
            format!("({n_in} + 2·{pad} − {v} + {stride}) not divisible by stride {stride}"),
        ));
    }
    Ok(span / stride)
}

/// Output side of a max pooling layer, or an error if the geometry is not exact.
pub fn pool_output_side(n_in: usize, q: usize, stride: usize) -> Result<usize> {
    if q == 0 || stride == 0 {
        return Err(Error::geometry(None, "pool size and stride must be positive"));
    }
    if q > n_in {
        return Err(Error::geometry(None, format!("pool region {q} larger than input {n_in}")));
    }
    let span = n_in - q + stride;
    if !span.is_multiple_of(stride) {
        return Err(Error::geometry(
            None,
            format!("({n_in} − {q} + {stride}) not divisible by stride {stride}"),
        ));
    }
    Ok(span / stride)
}

/// A convolution layer: `c_out` filters of size `v × v × c_in`.
///
/// Weights are laid out `[k][x][y][c]`, i.e. filter-major with the input
/// channel varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub v: usize,
    pub stride: usize,
    pub pad: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvSpec {
    pub fn new(v: usize, stride: usize, pad: usize, c_in: usize, c_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != c_out * v * v * c_in {
            return Err(Error::shape(c_out * v * v * c_in, weights.len()));
        }
        if bias.len() != c_out {
            return Err(Error::shape(c_out, bias.len()));
        }
        Ok(Self { v, stride, pad, c_in, c_out, weights, bias })
    }

    #[inline]
    pub fn weight(&self, k: usize, x: usize, y: usize, c: usize) -> f64 {
        self.weights[((k * self.v + x) * self.v + y) * self.c_in + c]
    }

    pub fn output_side(&self, n_in: usize) -> Result<usize> {
        conv_output_side(n_in, self.v, self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub q: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn output_side(&self, n_in: usize) -> Result<usize> {
        pool_output_side(n_in, self.q, self.stride)
    }
}

pub fn conv_forward(input: &FeatureMap3, spec: &ConvSpec) -> Result<FeatureMap3> {
    if input.depth() != spec.c_in {
        return Err(Error::shape(format!("depth {}", spec.c_in), format!("depth {}", input.depth())));
    }
    let n_out = spec.output_side(input.side())?;
    let padded = input.zero_pad(spec.pad);
    let np = padded.side();
    let c_in = spec.c_in;
    let src = padded.as_slice();
    let row = spec.v * c_in;
    let mut out = vec![0.0; n_out * n_out * spec.c_out];
    for i in 0..n_out {
        for j in 0..n_out {
            for k in 0..spec.c_out {
                let mut acc = 0.0;
                for x in 0..spec.v {
                    // for fixed x the (y, c) window is contiguous in both buffers
                    let base = index_of(spec.stride * i + x, spec.stride * j, 0, np, c_in);
                    let w = &spec.weights[(k * spec.v + x) * row..(k * spec.v + x + 1) * row];
                    for (a, b) in src[base..base + row].iter().zip(w) {
                        acc += a * b;
                    }
                }
                out[index_of(i, j, k, n_out, spec.c_out)] = spec.bias[k] + acc;
            }
        }
    }
    Ok(FeatureMap3::from_raw(n_out, spec.c_out, out))
}

pub fn relu_forward(input: &FeatureMap3) -> FeatureMap3 {
    let data = input.as_slice().iter().map(|&v| v.max(0.0)).collect();
    FeatureMap3::from_raw(input.side(), input.depth(), data)
}

pub fn maxpool_forward(input: &FeatureMap3, spec: &PoolSpec) -> Result<FeatureMap3> {
    let n_out = spec.output_side(input.side())?;
    let depth = input.depth();
    let mut out = FeatureMap3::zeros(n_out, depth);
    for i in 0..n_out {
        for j in 0..n_out {
            for c in 0..depth {
                let mut best = f64::NEG_INFINITY;
                for x in 0..spec.q {
                    for y in 0..spec.q {
                        best = best.max(input.get(spec.stride * i + x, spec.stride * j + y, c));
                    }
                }
                out.set(i, j, c, best);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// Fully-connected layer `y = act(Wx + b)` with `W` stored row-major as
/// `output × input`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSpec {
    pub input: usize,
    pub output: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseSpec {
    pub fn new(input: usize, output: usize, weights: Vec<f64>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.len() != input * output {
            return Err(Error::shape(format!("{output}x{input} weights"), weights.len()));
        }
        if bias.len() != output {
            return Err(Error::shape(output, bias.len()));
        }
        Ok(Self { input, output, weights, bias, activation })
    }

    /// `Wx + b` without the activation.
    pub(crate) fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.input)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

pub fn dense_forward(input: &Vector1, spec: &DenseSpec) -> Result<Vector1> {
    if input.len() != spec.input {
        return Err(Error::LengthMismatch { expected: spec.input, found: input.len() });
    }
    let mut y = spec.affine(input.as_slice());
    if spec.activation == Activation::Relu {
        y.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    Ok(Vector1(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Training,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub mode: DropoutMode,
    pub seed: u64,
}

/// Inverted dropout with a generator seeded from `spec.seed`.
///
/// Returns the output and the keep mask. Survivors are scaled by
/// `1 / (1 − rate)`; with `rate == 1` every element is dropped.
pub fn dropout_apply(input: &Vector1, spec: &DropoutSpec) -> Result<(Vector1, Vec<bool>)> {
    if !(0.0..=1.0).contains(&spec.rate) {
        return Err(Error::InvalidConfig(format!("dropout rate {} outside [0, 1]", spec.rate)));
    }
    match spec.mode {
        DropoutMode::Inference => Ok((input.clone(), vec![true; input.len()])),
        DropoutMode::Training => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mask = dropout_mask(input.len(), spec.rate, &mut rng);
            let scale = keep_scale(spec.rate);
            let out = input
                .as_slice()
                .iter()
                .zip(&mask)
                .map(|(&v, &keep)| if keep { v * scale } else { 0.0 })
                .collect();
            Ok((Vector1(out), mask))
        }
    }
}

pub(crate) fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<bool> {
    if rate == 0.0 {
        return vec![true; len];
    }
    (0..len).map(|_| rng.random::<f64>() >= rate).collect()
}

pub(crate) fn keep_scale(rate: f64) -> f64 {
    if rate >= 1.0 {
        0.0
    } else {
        1.0 / (1.0 - rate)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(input: &[f64]) -> Vec<f64> {
    assert!(!input.is_empty(), "softmax of an empty vector");
    let max = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = input.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn cross_entropy(prob: &[f64], true_class: usize) -> f64 {
    assert!(true_class < prob.len(), "class {true_class} out of range for {} outputs", prob.len());
    -prob[true_class].max(CE_EPSILON).ln()
}

/// Index of the largest element; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
