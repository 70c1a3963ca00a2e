//! Hierarchical classifier: a tree of small softmax heads over the Multi-FM.
//!
//! Every internal node separates groups of classes; a sample is routed by
//! taking the most probable branch at each node until a leaf is reached.
//! Nodes are trained independently on the samples whose true label lies
//! below them, relabelled to the branch index.

mod archive;
mod topology;

pub use archive::{load_archive, save_archive, Archive, ArchiveManifest};
pub use topology::{Branch, TreeNode, TreeTopology};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::FeatureSet;
use crate::error::{Error, Result};
use crate::layers::head::sample_step;
use crate::layers::{argmax, Head, HeadArchitecture, HeadGrads, Momentum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub head: HeadArchitecture,
    /// Worker threads for node-parallel training; 1 trains sequentially. Not
    /// serialized, since it never changes the trained weights.
    #[serde(default = "one", skip_serializing)]
    pub jobs: usize,
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            head: HeadArchitecture::reduced(),
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be non-negative", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.head.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1]", self.head.dropout)));
        }
        Ok(())
    }
}

/// Training subset of one node: dataset row indices and their branch index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDataset {
    pub indices: Vec<usize>,
    pub targets: Vec<usize>,
    pub branch_counts: Vec<usize>,
}

impl NodeDataset {
    pub fn populated_branches(&self) -> usize {
        self.branch_counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Keeps the samples whose label is reachable under `node_id`, relabelled to
/// the branch that leads to it.
pub fn node_dataset(data: &FeatureSet, topology: &TreeTopology, node_id: usize) -> NodeDataset {
    let node = topology.node(node_id);
    let class_branch: Vec<Option<usize>> = data.class_names.iter().map(|name| node.branch_of(name)).collect();
    let mut out = NodeDataset { indices: Vec::new(), targets: Vec::new(), branch_counts: vec![0; node.arity()] };
    for (i, &label) in data.labels().iter().enumerate() {
        if let Some(b) = class_branch[label] {
            out.indices.push(i);
            out.targets.push(b);
            out.branch_counts[b] += 1;
        }
    }
    out
}

/// Seed for one node, independent of training order.
pub fn node_seed(seed: u64, node_id: usize) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = seed ^ (node_id as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains one head with mini-batch SGD with momentum on a node's subset.
/// Returns the head and the mean training loss of every epoch.
pub fn train_node(
    node: &TreeNode,
    data: &FeatureSet,
    subset: &NodeDataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Head, Vec<f64>)> {
    cfg.validate()?;
    if subset.populated_branches() < 2 {
        return Err(Error::DegenerateNode { id: node.id, name: node.name.clone() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = Head::init(data.dim, &cfg.head, node.arity(), &mut rng);
    let history = fit_head(&mut head, data, subset, cfg, &mut rng)?;
    Ok((head, history))
}

fn fit_head(head: &mut Head, data: &FeatureSet, subset: &NodeDataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut opt = Momentum::new(head, cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..subset.indices.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = HeadGrads::zeros_like(head);
            for &k in batch {
                let (loss, g) = sample_step(head, data.row(subset.indices[k]), subset.targets[k], rng)?;
                total += loss;
                grads.accumulate(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(head, &grads);
        }
        history.push(total / order.len() as f64);
    }
    Ok(history)
}

/// A tree with one trained head per internal node, in topology node order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedTree {
    topology: TreeTopology,
    class_names: Vec<String>,
    heads: Vec<Head>,
    leaf_class: Vec<Vec<Option<usize>>>,
}

/// Routing result for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub label: String,
    /// Ids of the visited internal nodes, root first.
    pub path: Vec<usize>,
    /// Branch taken at each visited node.
    pub branches: Vec<usize>,
    /// Softmax output of each visited node.
    pub probs: Vec<Vec<f64>>,
}

impl TrainedTree {
    pub fn from_parts(topology: TreeTopology, class_names: Vec<String>, heads: Vec<Head>) -> Result<Self> {
        topology.check_labels(&class_names)?;
        if heads.len() != topology.nodes().len() {
            return Err(Error::LengthMismatch { expected: topology.nodes().len(), found: heads.len() });
        }
        let width = heads[0].input_width();
        for (node, head) in topology.nodes().iter().zip(&heads) {
            if head.output_width() != node.arity() {
                return Err(Error::ArityMismatch {
                    node: node.id,
                    reason: format!("head has {} outputs", head.output_width()),
                });
            }
            if head.input_width() != width {
                return Err(Error::LengthMismatch { expected: width, found: head.input_width() });
            }
        }
        let leaf_class = topology
            .nodes()
            .iter()
            .map(|n| {
                n.branches
                    .iter()
                    .map(|b| match b {
                        Branch::Leaf(l) => class_names.iter().position(|c| c == l),
                        Branch::Child(_) => None,
                    })
                    .collect()
            })
            .collect();
        Ok(Self { topology, class_names, heads, leaf_class })
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topology
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn input_width(&self) -> usize {
        self.heads[0].input_width()
    }

    pub fn head(&self, node_id: usize) -> &Head {
        &self.heads[self.topology.position(node_id)]
    }

    /// Follows the argmax branch (lowest index on ties) from the root to a leaf.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.input_width() {
            return Err(Error::LengthMismatch { expected: self.input_width(), found: x.len() });
        }
        let mut id = self.topology.root();
        let mut out = Prediction { class: 0, label: String::new(), path: vec![], branches: vec![], probs: vec![] };
        loop {
            let pos = self.topology.position(id);
            let probs = self.heads[pos].forward(x)?;
            let b = argmax(&probs);
            out.path.push(id);
            out.branches.push(b);
            out.probs.push(probs);
            match &self.topology.nodes()[pos].branches[b] {
                Branch::Child(c) => id = *c,
                Branch::Leaf(l) => {
                    out.class = self.leaf_class[pos][b].expect("leaf labels checked at construction");
                    out.label = l.clone();
                    return Ok(out);
                }
            }
        }
    }
}

/// Per-node training outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub id: usize,
    pub name: String,
    pub samples: usize,
    pub loss_history: Vec<f64>,
}

/// Trains every internal node on its own subset. Node seeds depend only on
/// the configured seed and the node id, so the result does not depend on
/// training order or `cfg.jobs`.
pub fn train_tree(topology: &TreeTopology, data: &FeatureSet, cfg: &TrainConfig) -> Result<(TrainedTree, Vec<NodeReport>)> {
    cfg.validate()?;
    topology.check_labels(&data.class_names)?;
    let train_one = |node: &TreeNode| -> Result<(Head, NodeReport)> {
        let subset = node_dataset(data, topology, node.id);
        let (head, hist) = train_node(node, data, &subset, cfg, node_seed(cfg.seed, node.id))?;
        let report = NodeReport { id: node.id, name: node.name.clone(), samples: subset.indices.len(), loss_history: hist };
        Ok((head, report))
    };
    let results: Vec<Result<(Head, NodeReport)>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| topology.nodes().par_iter().map(train_one).collect())
    } else {
        topology.nodes().iter().map(train_one).collect()
    };
    let (heads, reports): (Vec<Head>, Vec<NodeReport>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let tree = TrainedTree::from_parts(topology.clone(), data.class_names.clone(), heads)?;
    Ok((tree, reports))
}

pub fn predict(tree: &TrainedTree, x: &[f64]) -> Result<Prediction> {
    tree.predict(x)
}
