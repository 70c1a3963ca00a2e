//! Sequential conv/ReLU/max-pool stacks and bi-channel stereo fusion.
//!
//! Both images of a stereo pair go through the same stack with the same
//! weights. The two final maps are flattened in canonical order and
//! concatenated, left first, into the Multi-FM vector.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{conv_forward, conv_output_side, maxpool_forward, pool_output_side, relu_forward, ConvSpec, PoolSpec};
use crate::tensor::{FeatureMap3, Vector1};
use crate::weightfile::{Record, RecordKind, WeightFile};

const MININET_JSON: &str = include_str!("../assets/mininet.json");
const ALEXCONV_JSON: &str = include_str!("../assets/alexconv.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv { v: usize, s: usize, p: usize, c_out: usize },
    Relu,
    Maxpool { q: usize, s: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub name: String,
    pub input_size: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl BackboneConfig {
    /// Input 32, two conv/ReLU/pool stages, final map 2×2×8.
    pub fn mininet() -> Self {
        serde_json::from_str(MININET_JSON).expect("bundled mininet config")
    }

    /// AlexNet-shaped five-conv stack on 227×227 input, final map 6×6×256.
    pub fn alexconv() -> Self {
        serde_json::from_str(ALEXCONV_JSON).expect("bundled alexconv config")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "mininet" => Some(Self::mininet()),
            "alexconv" => Some(Self::alexconv()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads a config file, or a bundled config when `spec` names one.
    pub fn load(spec: impl AsRef<Path>) -> Result<Self> {
        let path = spec.as_ref();
        if let Some(cfg) = path.to_str().and_then(Self::builtin) {
            if !path.exists() {
                return Ok(cfg);
            }
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// `(side, depth)` of the final feature map.
    pub fn output_shape(&self) -> Result<(usize, usize)> {
        Ok(*validate_config(self)?.last().unwrap())
    }

    /// Length of the fused stereo vector, `2·N_L²·C_L`.
    pub fn multi_fm_len(&self) -> Result<usize> {
        let (n, c) = self.output_shape()?;
        Ok(2 * n * n * c)
    }
}

/// Shape after every layer, starting with the input shape.
pub fn validate_config(cfg: &BackboneConfig) -> Result<Vec<(usize, usize)>> {
    if cfg.input_size == 0 || cfg.input_channels != 3 {
        return Err(Error::InvalidConfig(format!(
            "input must be N×N×3 with N > 0, got {}×{}×{}",
            cfg.input_size, cfg.input_size, cfg.input_channels
        )));
    }
    let mut shape = (cfg.input_size, cfg.input_channels);
    let mut trace = vec![shape];
    for (idx, layer) in cfg.layers.iter().enumerate() {
        let at = |e: Error| match e {
            Error::InvalidGeometry { reason, .. } => Error::InvalidGeometry { layer: Some(idx), reason },
            other => other,
        };
        shape = match *layer {
            LayerSpec::Conv { v, s, p, c_out } => {
                if c_out == 0 {
                    return Err(Error::geometry(Some(idx), "conv needs at least one filter"));
                }
                (conv_output_side(shape.0, v, s, p).map_err(at)?, c_out)
            }
            LayerSpec::Relu => shape,
            LayerSpec::Maxpool { q, s } => (pool_output_side(shape.0, q, s).map_err(at)?, shape.1),
        };
        trace.push(shape);
    }
    Ok(trace)
}

/// Convolution parameters for every conv layer of a config, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    convs: Vec<(usize, ConvSpec)>,
}

impl BackboneWeights {
    fn build(cfg: &BackboneConfig, mut fill: impl FnMut(usize, usize, usize) -> (Vec<f64>, Vec<f64>)) -> Result<Self> {
        let trace = validate_config(cfg)?;
        let mut convs = Vec::new();
        for (idx, layer) in cfg.layers.iter().enumerate() {
            if let LayerSpec::Conv { v, s, p, c_out } = *layer {
                let c_in = trace[idx].1;
                let (w, b) = fill(v * v * c_in, v * v * c_out, c_out);
                convs.push((idx, ConvSpec::new(v, s, p, c_in, c_out, w, b)?));
            }
        }
        Ok(Self { convs })
    }

    pub fn zeros(cfg: &BackboneConfig) -> Result<Self> {
        Self::build(cfg, |fan_in, _, c_out| (vec![0.0; fan_in * c_out], vec![0.0; c_out]))
    }

    /// Glorot-uniform filters and zero biases from a seeded generator.
    pub fn random(cfg: &BackboneConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(cfg, |fan_in, fan_out, c_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * c_out).map(|_| rng.random_range(-limit..limit)).collect();
            (w, vec![0.0; c_out])
        })
    }

    pub fn convs(&self) -> impl Iterator<Item = &ConvSpec> {
        self.convs.iter().map(|(_, c)| c)
    }

    /// Checks layer indices and filter shapes against `cfg`.
    pub fn check(&self, cfg: &BackboneConfig) -> Result<()> {
        let trace = validate_config(cfg)?;
        let expected: Vec<(usize, usize, usize, usize)> = cfg
            .layers
            .iter()
            .enumerate()
            .filter_map(|(idx, l)| match *l {
                LayerSpec::Conv { v, c_out, .. } => Some((idx, v, trace[idx].1, c_out)),
                _ => None,
            })
            .collect();
        let found: Vec<(usize, usize, usize, usize)> =
            self.convs.iter().map(|(idx, c)| (*idx, c.v, c.c_in, c.c_out)).collect();
        if expected != found {
            return Err(Error::WeightMismatch(format!(
                "config {} expects conv filters {:?}, weights provide {:?}",
                cfg.name, expected, found
            )));
        }
        for ((_, conv), layer) in self.convs.iter().zip(cfg.layers.iter().filter(|l| matches!(l, LayerSpec::Conv { .. }))) {
            if let LayerSpec::Conv { s, p, .. } = *layer {
                if conv.stride != s || conv.pad != p {
                    return Err(Error::WeightMismatch("stride or padding differs from config".into()));
                }
            }
        }
        Ok(())
    }

    pub fn to_weight_file(&self, cfg: &BackboneConfig) -> WeightFile {
        let mut records = Vec::new();
        for (idx, c) in &self.convs {
            records.push(Record::new(*idx, RecordKind::ConvKernel, &[c.c_out, c.v, c.v, c.c_in], &c.weights));
            records.push(Record::new(*idx, RecordKind::ConvBias, &[c.c_out], &c.bias));
        }
        WeightFile { name: cfg.name.clone(), records }
    }

    pub fn from_weight_file(cfg: &BackboneConfig, file: &WeightFile) -> Result<Self> {
        if file.name != cfg.name {
            return Err(Error::WeightMismatch(format!("file is for {:?}, config is {:?}", file.name, cfg.name)));
        }
        let template = Self::zeros(cfg)?;
        if file.records.len() != 2 * template.convs.len() {
            return Err(Error::WeightMismatch(format!(
                "expected {} records, found {}",
                2 * template.convs.len(),
                file.records.len()
            )));
        }
        let mut convs = Vec::with_capacity(template.convs.len());
        for ((idx, t), pair) in template.convs.iter().zip(file.records.chunks_exact(2)) {
            let (kernel, bias) = (&pair[0], &pair[1]);
            let want_k = [t.c_out, t.v, t.v, t.c_in];
            let ok = kernel.kind == RecordKind::ConvKernel
                && bias.kind == RecordKind::ConvBias
                && kernel.layer as usize == *idx
                && bias.layer as usize == *idx
                && kernel.dims_usize() == want_k
                && bias.dims_usize() == [t.c_out];
            if !ok {
                return Err(Error::WeightMismatch(format!("layer {idx}: record shape or kind differs from config")));
            }
            let spec = ConvSpec::new(t.v, t.stride, t.pad, t.c_in, t.c_out, kernel.values_f64(), bias.values_f64())?;
            convs.push((*idx, spec));
        }
        Ok(Self { convs })
    }
}

pub fn save_weights(cfg: &BackboneConfig, weights: &BackboneWeights, path: impl AsRef<Path>) -> Result<()> {
    weights.check(cfg)?;
    weights.to_weight_file(cfg).save(path)
}

pub fn load_weights(cfg: &BackboneConfig, path: impl AsRef<Path>) -> Result<BackboneWeights> {
    BackboneWeights::from_weight_file(cfg, &WeightFile::load(path)?)
}

/// Runs one image through the stack.
pub fn extract_channel(image: &FeatureMap3, cfg: &BackboneConfig, weights: &BackboneWeights) -> Result<FeatureMap3> {
    if image.side() != cfg.input_size || image.depth() != cfg.input_channels {
        return Err(Error::shape(
            format!("{0}x{0}x{1}", cfg.input_size, cfg.input_channels),
            format!("{0}x{0}x{1}", image.side(), image.depth()),
        ));
    }
    weights.check(cfg)?;
    let mut convs = weights.convs();
    let mut map = image.clone();
    for layer in &cfg.layers {
        map = match *layer {
            LayerSpec::Conv { .. } => conv_forward(&map, convs.next().expect("checked above"))?,
            LayerSpec::Relu => relu_forward(&map),
            LayerSpec::Maxpool { q, s } => maxpool_forward(&map, &PoolSpec { q, stride: s })?,
        };
    }
    Ok(map)
}

/// Concatenated left/right feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFM {
    vector: Vector1,
}

impl MultiFM {
    pub fn from_halves(left: Vector1, right: Vector1) -> Result<Self> {
        if left.len() != right.len() {
            return Err(Error::LengthMismatch { expected: left.len(), found: right.len() });
        }
        let mut v = left.into_inner();
        v.extend(right.into_inner());
        Ok(Self { vector: Vector1(v) })
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    pub fn left(&self) -> &[f64] {
        &self.vector.as_slice()[..self.len() / 2]
    }

    pub fn right(&self) -> &[f64] {
        &self.vector.as_slice()[self.len() / 2..]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.vector.as_slice()
    }

    pub fn into_vector(self) -> Vector1 {
        self.vector
    }
}

pub fn fuse_stereo(left: &FeatureMap3, right: &FeatureMap3, cfg: &BackboneConfig, weights: &BackboneWeights) -> Result<MultiFM> {
    let (l, r) = rayon::join(|| extract_channel(left, cfg, weights), || extract_channel(right, cfg, weights));
    MultiFM::from_halves(l?.flatten(), r?.flatten())
}
