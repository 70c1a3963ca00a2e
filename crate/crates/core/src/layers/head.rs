//! Fully-connected classifier heads: hidden `dense → ReLU → dropout` blocks
//! followed by a dense output layer and softmax, trained with cross-entropy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, cross_entropy, dropout_mask, keep_scale, softmax, Activation, DenseSpec};
use crate::error::{Error, Result};

/// Hidden-layer layout of a head. The output width is the node arity and is
/// supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadArchitecture {
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl HeadArchitecture {
    /// Two hidden layers of 4096 with 50% dropout, the AlexNet classifier head.
    pub fn alexnet() -> Self {
        Self { hidden: vec![4096, 4096], dropout: 0.5 }
    }

    /// Two hidden layers of 64, used with the small test backbone and
    /// synthetic feature vectors.
    pub fn reduced() -> Self {
        Self { hidden: vec![64, 64], dropout: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    layers: Vec<DenseSpec>,
    dropout: f64,
}

/// Activations recorded during a training forward pass.
#[derive(Debug, Clone)]
pub struct HeadCache {
    /// Input fed to each dense layer (after the previous dropout).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each dense layer.
    pre: Vec<Vec<f64>>,
    /// Per-hidden-layer dropout multipliers (0 or 1/(1−rate)).
    masks: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl HeadCache {
    pub fn masks(&self) -> &[Vec<f64>] {
        &self.masks
    }
}

/// Gradients with the same layout as the head's dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl HeadGrads {
    pub fn zeros_like(head: &Head) -> Self {
        Self {
            weights: head.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: head.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &HeadGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights).chain(self.biases.iter_mut().zip(&other.biases)) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

impl Head {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(input: usize, arch: &HeadArchitecture, outputs: usize, rng: &mut R) -> Self {
        let mut widths = vec![input];
        widths.extend(&arch.hidden);
        widths.push(outputs);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(idx, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
                let activation = if idx == last { Activation::Identity } else { Activation::Relu };
                DenseSpec { input: fan_in, output: fan_out, weights, bias: vec![0.0; fan_out], activation }
            })
            .collect();
        Self { layers, dropout: arch.dropout }
    }

    pub fn from_layers(layers: Vec<DenseSpec>, dropout: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("head needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output != pair[1].input {
                return Err(Error::shape(pair[0].output, pair[1].input));
            }
        }
        Ok(Self { layers, dropout })
    }

    pub fn layers(&self) -> &[DenseSpec] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseSpec] {
        &mut self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn architecture(&self) -> HeadArchitecture {
        HeadArchitecture {
            hidden: self.layers[..self.layers.len() - 1].iter().map(|l| l.output).collect(),
            dropout: self.dropout,
        }
    }

    /// Output logits with dropout disabled.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::LengthMismatch { expected: self.input_width(), found: x.len() });
        }
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.affine(&a);
            if layer.activation == Activation::Relu {
                a.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(a)
    }

    /// Inference forward: class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Training forward with freshly drawn dropout masks.
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<HeadCache> {
        let scale = keep_scale(self.dropout);
        let masks = self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| {
                dropout_mask(l.output, self.dropout, rng)
                    .into_iter()
                    .map(|keep| if keep { scale } else { 0.0 })
                    .collect()
            })
            .collect();
        self.forward_with_masks(x, masks)
    }

    /// Training forward with caller-supplied dropout multipliers.
    pub fn forward_with_masks(&self, x: &[f64], masks: Vec<Vec<f64>>) -> Result<HeadCache> {
        if x.len() != self.input_width() {
            return Err(Error::LengthMismatch { expected: self.input_width(), found: x.len() });
        }
        if masks.len() + 1 != self.layers.len() {
            return Err(Error::shape(self.layers.len() - 1, masks.len()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            inputs.push(std::mem::take(&mut a));
            if let Some(mask) = masks.get(idx) {
                if mask.len() != z.len() {
                    return Err(Error::shape(z.len(), mask.len()));
                }
                a = z.iter().zip(mask).map(|(&v, &m)| v.max(0.0) * m).collect();
            } else {
                a = z.clone();
            }
            pre.push(z);
        }
        let probs = softmax(&a);
        Ok(HeadCache { inputs, pre, masks, probs })
    }
}

/// Exact gradients of `cross_entropy(softmax(head(x)), true_class)` with
/// respect to every weight and bias, reusing the cached dropout masks.
///
/// The ε-floor of the loss is ignored; its effect on the gradient is below
/// 1e−12 relative.
pub fn head_backward(head: &Head, cache: &HeadCache, true_class: usize) -> HeadGrads {
    assert_eq!(cache.inputs.len(), head.layers.len(), "cache does not belong to this head");
    assert!(true_class < head.output_width(), "class {true_class} out of range");
    let mut grads = HeadGrads::zeros_like(head);
    let mut delta = cache.probs.clone();
    delta[true_class] -= 1.0;
    for idx in (0..head.layers.len()).rev() {
        let layer = &head.layers[idx];
        let a = &cache.inputs[idx];
        for (o, &d) in delta.iter().enumerate() {
            let row = &mut grads.weights[idx][o * layer.input..(o + 1) * layer.input];
            row.iter_mut().zip(a).for_each(|(g, &x)| *g = d * x);
        }
        grads.biases[idx].copy_from_slice(&delta);
        if idx == 0 {
            break;
        }
        let mut back = vec![0.0; layer.input];
        for (o, &d) in delta.iter().enumerate() {
            let row = &layer.weights[o * layer.input..(o + 1) * layer.input];
            back.iter_mut().zip(row).for_each(|(b, &w)| *b += w * d);
        }
        // through dropout and the ReLU of the layer below
        let below = idx - 1;
        delta = back
            .iter()
            .zip(&cache.masks[below])
            .zip(&cache.pre[below])
            .map(|((&g, &m), &z)| if z > 0.0 { g * m } else { 0.0 })
            .collect();
    }
    grads
}

/// Classical momentum: `v ← mu·v − lr·g`, `w ← w + v`.
pub fn sgd_momentum_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, mu: f64) {
    assert!(params.len() == grads.len() && grads.len() == velocity.len(), "parameter shapes disagree");
    for ((w, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = mu * *v - lr * g;
        *w += *v;
    }
}

/// Velocity buffers for every parameter of one head.
#[derive(Debug, Clone)]
pub struct Momentum {
    velocity: HeadGrads,
    pub lr: f64,
    pub mu: f64,
}

impl Momentum {
    pub fn new(head: &Head, lr: f64, mu: f64) -> Self {
        Self { velocity: HeadGrads::zeros_like(head), lr, mu }
    }

    pub fn step(&mut self, head: &mut Head, grads: &HeadGrads) {
        for (idx, layer) in head.layers.iter_mut().enumerate() {
            sgd_momentum_step(&mut layer.weights, &grads.weights[idx], &mut self.velocity.weights[idx], self.lr, self.mu);
            sgd_momentum_step(&mut layer.bias, &grads.biases[idx], &mut self.velocity.biases[idx], self.lr, self.mu);
        }
    }
}

/// Loss and gradients for one sample.
pub(crate) fn sample_step<R: Rng + ?Sized>(head: &Head, x: &[f64], class: usize, rng: &mut R) -> Result<(f64, HeadGrads)> {
    let cache = head.forward_train(x, rng)?;
    let loss = cross_entropy(&cache.probs, class);
    Ok((loss, head_backward(head, &cache, class)))
}
