//! The learned sketch: a kd-tree over query space with one network per leaf.

pub mod aqc;
pub mod format;
pub mod kdtree;

use std::path::Path;

use rayon::prelude::*;

pub use aqc::{compute_aqc, DEFAULT_PAIR_CAP};
pub use kdtree::{KdNode, KdTree};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mlp::{train_adam, LabelScale, Mlp, TrainConfig};
use crate::query::{Query, QuerySpec, TrainingSet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchConfig {
    /// kd-tree height; the tree starts with `2^height` leaves.
    pub height: usize,
    /// Leaves kept after merging.
    pub leaves: usize,
    /// Number of network layers.
    pub depth: usize,
    pub first: usize,
    pub rest: usize,
    pub seed: u64,
    /// Optimizer settings shared by all leaves; the seed is re-derived per leaf.
    pub train: TrainConfig,
    pub aqc_pairs: usize,
    pub min_leaf_queries: usize,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self {
            height: 4,
            leaves: 8,
            depth: 5,
            first: 60,
            rest: 30,
            seed: 0,
            train: TrainConfig::default(),
            aqc_pairs: DEFAULT_PAIR_CAP,
            min_leaf_queries: 100,
        }
    }
}

impl SketchConfig {
    /// Single network, no partitioning.
    pub fn single(depth: usize, first: usize, rest: usize) -> Self {
        Self {
            height: 0,
            leaves: 1,
            depth,
            first,
            rest,
            ..Self::default()
        }
    }

    pub fn layer_dims(&self, d: usize) -> Result<Vec<usize>> {
        Mlp::layer_dims(d, self.depth, self.first, self.rest)
    }

    pub fn params_per_leaf(&self, d: usize) -> Result<usize> {
        Ok(self
            .layer_dims(d)?
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum())
    }

    /// Exact serialized size of a sketch built with this configuration.
    pub fn encoded_len(&self, d: usize) -> Result<usize> {
        Ok(format::encoded_len(self.leaves, &self.layer_dims(d)?))
    }

    fn validate(&self) -> Result<()> {
        if self.leaves < 1 {
            return Err(Error::arg("leaf count must be at least 1"));
        }
        if self.height >= usize::BITS as usize || self.leaves > 1usize << self.height {
            return Err(Error::arg(format!(
                "{} leaves requested from a tree of height {}",
                self.leaves, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildMeta {
    pub height: usize,
    pub leaves: usize,
    pub depth: usize,
    pub first: usize,
    pub rest: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub scale: LabelScale,
    pub model: Mlp,
    pub aqc: f64,
    /// Raw-label MSE of the stored network on its training queries.
    pub train_err: f64,
}

impl Leaf {
    pub fn predict(&self, q: &[f64]) -> f64 {
        self.scale.unscale(self.model.forward(q))
    }
}

/// Preorder node; a split's left child is the next node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Node {
    Split { dim: usize, val: f64, right: usize },
    Leaf(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuroSketch {
    spec: QuerySpec,
    d: usize,
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
    meta: BuildMeta,
}

impl NeuroSketch {
    /// Partitions `ts`, merges to `cfg.leaves` leaves and trains one network
    /// per leaf (in parallel).
    pub fn build(ds: &Dataset, ts: &TrainingSet, spec: &QuerySpec, cfg: &SketchConfig) -> Result<Self> {
        spec.validate(ds.dims())?;
        let d = spec.query_dims(ds.dims());
        if ts.dim() != d {
            return Err(Error::arg(format!(
                "training queries have dimension {}, the query spec implies {d}",
                ts.dim()
            )));
        }
        Self::build_from_training(ts, spec, cfg)
    }

    /// Same as [`NeuroSketch::build`] without a dataset consistency check.
    pub fn build_from_training(ts: &TrainingSet, spec: &QuerySpec, cfg: &SketchConfig) -> Result<Self> {
        cfg.validate()?;
        let d = ts.dim();
        cfg.layer_dims(d)?;
        let mut tree = KdTree::partition(ts, cfg.height)?;
        let aqc_seed = rng::derive(cfg.seed, 0xa9c);
        tree.merge(cfg.leaves, |q| aqc::aqc_subset(ts, q, cfg.aqc_pairs, aqc_seed))?;

        let leaf_ids = tree.leaves();
        for &l in &leaf_ids {
            let count = tree.nodes[l].queries.len();
            if count < cfg.min_leaf_queries {
                return Err(Error::Build(format!(
                    "a leaf received only {count} training queries (minimum {}); \
                     use a larger training set or a smaller height",
                    cfg.min_leaf_queries
                )));
            }
        }
        let leaves = leaf_ids
            .par_iter()
            .enumerate()
            .map(|(k, &l)| -> Result<Leaf> {
                let node = &tree.nodes[l];
                let local = ts.subset(&node.queries);
                let aqc = match node.aqc {
                    Some(a) => a,
                    None => aqc::aqc_subset(ts, &node.queries, cfg.aqc_pairs, aqc_seed)?,
                };
                let init = Mlp::new(d, cfg.depth, cfg.first, cfg.rest, rng::derive(cfg.seed, 0x1000 + k as u64))?;
                let train_cfg = TrainConfig {
                    seed: rng::derive(cfg.seed, 0x2000 + k as u64),
                    ..cfg.train
                };
                let out = train_adam(init, &local, &train_cfg)?;
                let mut model = out.model;
                model.quantize_f32();
                let train_err = model.mse(&local, &out.scale);
                Ok(Leaf {
                    scale: out.scale,
                    model,
                    aqc,
                    train_err,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut nodes = Vec::with_capacity(tree.nodes.len());
        let mut leaf_index = std::collections::HashMap::new();
        for (k, &l) in leaf_ids.iter().enumerate() {
            leaf_index.insert(l, k);
        }
        flatten(&tree, 0, &leaf_index, &mut nodes);
        Ok(Self {
            spec: *spec,
            d,
            nodes,
            leaves,
            meta: BuildMeta {
                height: cfg.height,
                leaves: cfg.leaves,
                depth: cfg.depth,
                first: cfg.first,
                rest: cfg.rest,
                seed: cfg.seed,
            },
        })
    }

    pub fn spec(&self) -> &QuerySpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn meta(&self) -> &BuildMeta {
        &self.meta
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn param_count(&self) -> usize {
        self.leaves.iter().map(|l| l.model.param_count()).sum()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> (usize, usize) {
            // Returns (depth below i, index after the subtree).
            match nodes[i] {
                Node::Leaf(_) => (0, i + 1),
                Node::Split { right, .. } => {
                    let (l, _) = walk(nodes, i + 1);
                    let (r, end) = walk(nodes, right);
                    (1 + l.max(r), end)
                }
            }
        }
        walk(&self.nodes, 0).0
    }

    /// Index of the leaf a query vector is routed to.
    pub fn leaf_of(&self, q: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split { dim, val, right } => i = if q[dim] <= val { i + 1 } else { right },
                Node::Leaf(k) => return k,
            }
        }
    }

    /// Answer for a flattened query vector, after checking it is a valid
    /// query of this sketch's kind.
    pub fn answer(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.d {
            return Err(Error::arg(format!(
                "query vector has length {}, sketch expects {}",
                q.len(),
                self.d
            )));
        }
        Query::from_vector(self.spec.predicate_kind, q)?;
        Ok(self.answer_unchecked(q))
    }

    pub fn answer_query(&self, q: &Query) -> Result<f64> {
        if q.kind() != self.spec.predicate_kind {
            return Err(Error::arg("query kind does not match the sketch"));
        }
        self.answer(&q.to_vector())
    }

    /// Answer without domain validation.
    #[inline]
    pub fn answer_unchecked(&self, q: &[f64]) -> f64 {
        self.leaves[self.leaf_of(q)].predict(q)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        format::decode(bytes)
    }

    pub fn size_bytes(&self) -> usize {
        format::encoded_len(self.leaves.len(), self.leaves[0].model.dims())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn flatten(
    tree: &KdTree,
    i: usize,
    leaf_index: &std::collections::HashMap<usize, usize>,
    out: &mut Vec<Node>,
) {
    let n = &tree.nodes[i];
    match (n.left, n.right) {
        (Some(l), Some(r)) => {
            let here = out.len();
            out.push(Node::Split {
                dim: n.dim,
                val: n.val,
                right: 0,
            });
            flatten(tree, l, leaf_index, out);
            let right_at = out.len();
            if let Node::Split { right, .. } = &mut out[here] {
                *right = right_at;
            }
            flatten(tree, r, leaf_index, out);
        }
        _ => out.push(Node::Leaf(leaf_index[&i])),
    }
}
