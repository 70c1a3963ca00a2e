//! Trained-tree archive: a directory holding the topology, one weight file
//! per node, an optional backbone, and a JSON manifest.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/topology.json
//! <dir>/nodes/node<ID>_<NAME>.dwt
//! <dir>/backbone.json, <dir>/backbone.dwt    (image pipelines only)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainedTree, TreeTopology};
use crate::backbone::{load_weights, save_weights, BackboneConfig, BackboneWeights};
use crate::error::{Error, Result};
use crate::layers::{Activation, DenseSpec, Head};
use crate::weightfile::{Record, RecordKind, WeightFile};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: usize,
    pub name: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub version: u32,
    pub class_names: Vec<String>,
    pub input_width: usize,
    pub train: TrainConfig,
    pub nodes: Vec<NodeEntry>,
    pub backbone: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Archive {
    pub manifest: ArchiveManifest,
    pub tree: TrainedTree,
    pub backbone: Option<(BackboneConfig, BackboneWeights)>,
}

fn head_to_file(name: &str, head: &Head) -> WeightFile {
    let mut records = Vec::new();
    for (idx, l) in head.layers().iter().enumerate() {
        records.push(Record::new(idx, RecordKind::DenseWeights, &[l.output, l.input], &l.weights));
        records.push(Record::new(idx, RecordKind::DenseBias, &[l.output], &l.bias));
    }
    WeightFile { name: name.to_string(), records }
}

fn head_from_file(file: &WeightFile, dropout: f64) -> Result<Head> {
    if file.records.is_empty() || !file.records.len().is_multiple_of(2) {
        return Err(Error::WeightMismatch(format!("head {} has {} records", file.name, file.records.len())));
    }
    let n_layers = file.records.len() / 2;
    let mut layers = Vec::with_capacity(n_layers);
    for (idx, pair) in file.records.chunks_exact(2).enumerate() {
        let (w, b) = (&pair[0], &pair[1]);
        let dims = w.dims_usize();
        let ok = w.kind == RecordKind::DenseWeights
            && b.kind == RecordKind::DenseBias
            && w.layer as usize == idx
            && b.layer as usize == idx
            && dims.len() == 2
            && b.dims_usize() == [dims[0]];
        if !ok {
            return Err(Error::WeightMismatch(format!("head {} layer {idx} records are malformed", file.name)));
        }
        let act = if idx + 1 == n_layers { Activation::Identity } else { Activation::Relu };
        layers.push(DenseSpec::new(dims[1], dims[0], w.values_f64(), b.values_f64(), act)?);
    }
    Head::from_layers(layers, dropout)
}

pub fn save_archive(
    dir: impl AsRef<Path>,
    tree: &TrainedTree,
    train: &TrainConfig,
    backbone: Option<(&BackboneConfig, &BackboneWeights)>,
) -> Result<ArchiveManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("nodes"))?;
    fs::write(dir.join("topology.json"), tree.topology().to_json())?;
    let mut nodes = Vec::new();
    for (node, head) in tree.topology().nodes().iter().zip(tree.heads()) {
        let file = format!("nodes/node{:02}_{}.dwt", node.id, node.name);
        head_to_file(&node.name, head).save(dir.join(&file))?;
        nodes.push(NodeEntry { id: node.id, name: node.name.clone(), file });
    }
    if let Some((cfg, weights)) = backbone {
        fs::write(dir.join("backbone.json"), serde_json::to_string_pretty(cfg)?)?;
        save_weights(cfg, weights, dir.join("backbone.dwt"))?;
    }
    let manifest = ArchiveManifest {
        version: ARCHIVE_VERSION,
        class_names: tree.class_names().to_vec(),
        input_width: tree.input_width(),
        train: train.clone(),
        nodes,
        backbone: backbone.map(|(c, _)| c.name.clone()),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_archive(dir: impl AsRef<Path>) -> Result<Archive> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::MissingFile(manifest_path));
    }
    let manifest: ArchiveManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.version != ARCHIVE_VERSION {
        return Err(Error::CorruptFile(format!("archive version {}", manifest.version)));
    }
    let topology = TreeTopology::from_json(&fs::read_to_string(dir.join("topology.json"))?)?;
    let mut heads = Vec::with_capacity(topology.nodes().len());
    for node in topology.nodes() {
        let entry = manifest
            .nodes
            .iter()
            .find(|e| e.id == node.id)
            .ok_or_else(|| Error::CorruptFile(format!("no weights for node {}", node.id)))?;
        let file = WeightFile::load(dir.join(&entry.file))?;
        heads.push(head_from_file(&file, manifest.train.head.dropout)?);
    }
    let tree = TrainedTree::from_parts(topology, manifest.class_names.clone(), heads)?;
    if tree.input_width() != manifest.input_width {
        return Err(Error::LengthMismatch { expected: manifest.input_width, found: tree.input_width() });
    }
    let backbone = match &manifest.backbone {
        Some(_) => {
            let cfg = BackboneConfig::from_json(&fs::read_to_string(dir.join("backbone.json"))?)?;
            let weights = load_weights(&cfg, dir.join("backbone.dwt"))?;
            if cfg.multi_fm_len()? != tree.input_width() {
                return Err(Error::LengthMismatch { expected: tree.input_width(), found: cfg.multi_fm_len()? });
            }
            Some((cfg, weights))
        }
        None => None,
    };
    Ok(Archive { manifest, tree, backbone })
}
