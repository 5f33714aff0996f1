//! Binary sketch file (`NSKT`), little-endian throughout.
//!
//! ```text
//! magic "NSKT" | version u16
//! agg u8 | measure u16 | predicate u8 | active u16 | d u16
//! tree, preorder:
//!   internal: 0u8 | dim u16 | val f64
//!   leaf:     1u8 | mean f64 | std f64 | weight blob
//! metadata: height u16 | leaves u16 | depth u16 | first u16 | rest u16 | seed u64
//!           then (aqc f64, train_err f64) per leaf in preorder
//! ```

use super::{BuildMeta, Leaf, NeuroSketch, Node};
use crate::codec::{put_u16, Cursor};
use crate::error::{Error, Result};
use crate::mlp::{LabelScale, Mlp};
use crate::query::{Aggregation, PredicateKind, QuerySpec};

pub const MAGIC: &[u8; 4] = b"NSKT";
pub const VERSION: u16 = 1;

const TAG_INTERNAL: u8 = 0;
const TAG_LEAF: u8 = 1;

const HEADER_BYTES: usize = 4 + 2 + 1 + 2 + 1 + 2 + 2;
const INTERNAL_BYTES: usize = 1 + 2 + 8;
const LEAF_FIXED_BYTES: usize = 1 + 8 + 8;
const META_FIXED_BYTES: usize = 5 * 2 + 8;
const META_PER_LEAF: usize = 16;

/// Exact file size of a sketch with `leaves` leaves of networks shaped `dims`.
pub fn encoded_len(leaves: usize, dims: &[usize]) -> usize {
    HEADER_BYTES
        + leaves.saturating_sub(1) * INTERNAL_BYTES
        + leaves * (LEAF_FIXED_BYTES + Mlp::blob_len_for(dims) + META_PER_LEAF)
        + META_FIXED_BYTES
}

pub(super) fn encode(sk: &NeuroSketch) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(sk.spec.agg.code());
    put_u16(&mut buf, sk.spec.measure_index, "measure index")?;
    buf.push(sk.spec.predicate_kind.code());
    put_u16(&mut buf, sk.spec.active_count, "active count")?;
    put_u16(&mut buf, sk.d, "query dimension")?;
    for node in &sk.nodes {
        match *node {
            Node::Split { dim, val, .. } => {
                buf.push(TAG_INTERNAL);
                put_u16(&mut buf, dim, "split dimension")?;
                buf.extend_from_slice(&val.to_le_bytes());
            }
            Node::Leaf(i) => {
                let leaf = &sk.leaves[i];
                buf.push(TAG_LEAF);
                buf.extend_from_slice(&leaf.scale.mean.to_le_bytes());
                buf.extend_from_slice(&leaf.scale.std.to_le_bytes());
                leaf.model.write_blob(&mut buf)?;
            }
        }
    }
    let m = &sk.meta;
    for (v, what) in [
        (m.height, "height"),
        (m.leaves, "leaf count"),
        (m.depth, "depth"),
        (m.first, "first width"),
        (m.rest, "rest width"),
    ] {
        put_u16(&mut buf, v, what)?;
    }
    buf.extend_from_slice(&m.seed.to_le_bytes());
    for leaf in &sk.leaves {
        buf.extend_from_slice(&leaf.aqc.to_le_bytes());
        buf.extend_from_slice(&leaf.train_err.to_le_bytes());
    }
    Ok(buf)
}

pub(super) fn decode(bytes: &[u8]) -> Result<NeuroSketch> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4)? != MAGIC {
        return Err(Error::format("not a sketch file (bad magic)"));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported sketch version {version}, expected {VERSION}"
        )));
    }
    let agg = Aggregation::from_code(cur.u8()?)?;
    let measure_index = cur.u16()? as usize;
    let predicate_kind = PredicateKind::from_code(cur.u8()?)?;
    let active_count = cur.u16()? as usize;
    let spec = QuerySpec {
        agg,
        measure_index,
        predicate_kind,
        active_count,
    };
    let d = cur.u16()? as usize;

    let mut nodes = Vec::new();
    let mut leaves = Vec::new();
    // Preorder decode with an explicit stack of internal nodes awaiting their
    // right child.
    let mut pending: Vec<usize> = Vec::new();
    loop {
        let here = nodes.len();
        match cur.u8()? {
            TAG_INTERNAL => {
                let dim = cur.u16()? as usize;
                let val = cur.f64()?;
                if dim >= d {
                    return Err(Error::format(format!("split dimension {dim} >= {d}")));
                }
                nodes.push(Node::Split { dim, val, right: 0 });
                pending.push(here);
                continue;
            }
            TAG_LEAF => {
                let mean = cur.f64()?;
                let std = cur.f64()?;
                let model = Mlp::read_blob(&mut cur)?;
                if model.input_dim() != d {
                    return Err(Error::format("leaf network input does not match d"));
                }
                nodes.push(Node::Leaf(leaves.len()));
                leaves.push(Leaf {
                    scale: LabelScale { mean, std },
                    model,
                    aqc: f64::NAN,
                    train_err: f64::NAN,
                });
            }
            tag => return Err(Error::format(format!("unknown node tag {tag}"))),
        }
        // A leaf closes the left subtree of the nearest open internal node,
        // or completes the tree.
        let next = nodes.len();
        loop {
            match pending.last().copied() {
                None => break,
                Some(p) => match &mut nodes[p] {
                    Node::Split { right, .. } if *right == 0 => {
                        *right = next;
                        break;
                    }
                    _ => {
                        pending.pop();
                    }
                },
            }
        }
        if pending.is_empty() {
            break;
        }
    }

    let mut vals = [0usize; 5];
    for v in &mut vals {
        *v = cur.u16()? as usize;
    }
    let seed = cur.u64()?;
    for leaf in &mut leaves {
        leaf.aqc = cur.f64()?;
        leaf.train_err = cur.f64()?;
    }
    if cur.remaining() != 0 {
        return Err(Error::format(format!("{} trailing bytes", cur.remaining())));
    }
    let meta = BuildMeta {
        height: vals[0],
        leaves: vals[1],
        depth: vals[2],
        first: vals[3],
        rest: vals[4],
        seed,
    };
    if meta.leaves != leaves.len() {
        return Err(Error::format("metadata leaf count disagrees with the tree"));
    }
    Ok(NeuroSketch {
        spec,
        d,
        nodes,
        leaves,
        meta,
    })
}
