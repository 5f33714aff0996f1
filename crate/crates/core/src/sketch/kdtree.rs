//! Median-split kd-tree over training queries and the AQC-driven merge.

use crate::error::{Error, Result};
use crate::query::TrainingSet;

#[derive(Debug, Clone)]
pub struct KdNode {
    pub dim: usize,
    pub val: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub parent: Option<usize>,
    /// Indices into the training set of the queries routed here.
    pub queries: Vec<usize>,
    pub marked: bool,
    /// Cached AQC of a leaf; `None` until computed.
    pub aqc: Option<f64>,
}

impl KdNode {
    fn leaf(queries: Vec<usize>, parent: Option<usize>) -> Self {
        Self {
            dim: 0,
            val: 0.0,
            left: None,
            right: None,
            parent,
            queries,
            marked: false,
            aqc: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }
}

/// Arena-backed tree; node 0 is the root.
#[derive(Debug, Clone)]
pub struct KdTree {
    pub nodes: Vec<KdNode>,
    d: usize,
}

impl KdTree {
    /// Recursively median-splits all queries of `ts` to height `h`, starting
    /// with split dimension 0.
    pub fn partition(ts: &TrainingSet, h: usize) -> Result<Self> {
        Self::partition_from(ts, (0..ts.len()).collect(), h, 0)
    }

    pub fn partition_from(ts: &TrainingSet, queries: Vec<usize>, h: usize, dim: usize) -> Result<Self> {
        let needed = 1usize.checked_shl(h as u32).unwrap_or(usize::MAX);
        if queries.len() < needed {
            return Err(Error::Build(format!(
                "{} training queries cannot fill 2^{h} = {needed} leaves",
                queries.len()
            )));
        }
        let mut tree = KdTree {
            nodes: vec![KdNode::leaf(queries, None)],
            d: ts.dim(),
        };
        tree.split(ts, 0, h, dim % ts.dim())?;
        Ok(tree)
    }

    fn split(&mut self, ts: &TrainingSet, node: usize, h: usize, start: usize) -> Result<()> {
        if h == 0 {
            return Ok(());
        }
        let queries = std::mem::take(&mut self.nodes[node].queries);
        let Some((dim, val)) = (0..self.d)
            .map(|k| (start + k) % self.d)
            .find_map(|dim| median_split(ts, &queries, dim).map(|v| (dim, v)))
        else {
            return Err(Error::Build(format!(
                "a node holding {} queries has no dimension that splits them",
                queries.len()
            )));
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            queries.into_iter().partition(|&i| ts.query(i)[dim] <= val);
        let l = self.nodes.len();
        self.nodes.push(KdNode::leaf(left, Some(node)));
        self.nodes.push(KdNode::leaf(right, Some(node)));
        let n = &mut self.nodes[node];
        n.dim = dim;
        n.val = val;
        n.left = Some(l);
        n.right = Some(l + 1);
        let next = (dim + 1) % self.d;
        self.split(ts, l, h - 1, next)?;
        self.split(ts, l + 1, h - 1, next)
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            match (n.left, n.right) {
                (Some(l), Some(r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                _ => out.push(i),
            }
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Leaf reached by `q` following `q[dim] <= val` to the left.
    pub fn route(&self, q: &[f64]) -> usize {
        let mut i = 0;
        while let (Some(l), Some(r)) = (self.nodes[i].left, self.nodes[i].right) {
            i = if q[self.nodes[i].dim] <= self.nodes[i].val { l } else { r };
        }
        i
    }

    pub fn depth_of(&self, mut node: usize) -> usize {
        let mut depth = 0;
        while let Some(p) = self.nodes[node].parent {
            node = p;
            depth += 1;
        }
        depth
    }

    /// Merges leaves until `s` remain. Each round marks the unmarked leaf
    /// with the smallest AQC (ties: leftmost); two marked sibling leaves are
    /// replaced by their parent, which becomes an unmarked leaf holding both
    /// query sets.
    pub fn merge(&mut self, s: usize, mut aqc: impl FnMut(&[usize]) -> Result<f64>) -> Result<()> {
        if s < 1 {
            return Err(Error::arg("target leaf count must be at least 1"));
        }
        let current = self.leaf_count();
        if current < s {
            return Err(Error::arg(format!(
                "tree has {current} leaves, fewer than the target {s}"
            )));
        }
        loop {
            let leaves = self.leaves();
            if leaves.len() <= s {
                return Ok(());
            }
            for &i in &leaves {
                if self.nodes[i].aqc.is_none() {
                    self.nodes[i].aqc = Some(aqc(&self.nodes[i].queries)?);
                }
            }
            let pick = leaves
                .iter()
                .copied()
                .filter(|&i| !self.nodes[i].marked)
                .min_by(|&a, &b| {
                    let (x, y) = (self.nodes[a].aqc.unwrap(), self.nodes[b].aqc.unwrap());
                    x.total_cmp(&y)
                });
            let Some(pick) = pick else {
                return Err(Error::Merge(format!(
                    "all {} leaves are marked and no sibling pair can merge toward {s}",
                    leaves.len()
                )));
            };
            self.nodes[pick].marked = true;
            let Some(parent) = self.nodes[pick].parent else {
                continue;
            };
            let (l, r) = (self.nodes[parent].left.unwrap(), self.nodes[parent].right.unwrap());
            let sibling = if l == pick { r } else { l };
            if self.nodes[sibling].is_leaf() && self.nodes[sibling].marked {
                let mut union = std::mem::take(&mut self.nodes[l].queries);
                union.append(&mut self.nodes[r].queries);
                union.sort_unstable();
                let p = &mut self.nodes[parent];
                p.left = None;
                p.right = None;
                p.queries = union;
                p.marked = false;
                p.aqc = None;
            }
        }
    }
}

/// Lower median of the `dim` coordinates, if it leaves both sides nonempty.
fn median_split(ts: &TrainingSet, queries: &[usize], dim: usize) -> Option<f64> {
    let mut vals: Vec<f64> = queries.iter().map(|&i| ts.query(i)[dim]).collect();
    if vals.len() < 2 {
        return None;
    }
    let k = (vals.len() - 1) / 2;
    let (_, &mut val, upper) = vals.select_nth_unstable_by(k, f64::total_cmp);
    // Everything above index k must include something strictly larger.
    upper.iter().any(|&v| v > val).then_some(val)
}
