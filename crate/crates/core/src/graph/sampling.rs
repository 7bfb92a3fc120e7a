//! Neighbor sampling into bipartite message-flow blocks.
//!
//! A [`SampledBlock`] maps a set of destination nodes to the source nodes
//! they aggregate from. Source lists always start with a copy of the
//! destinations so a layer can reach each destination's own row (skip
//! connections, isolated nodes) at the same local index.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SparseMatrix;

use super::Graph;

/// Per-node neighbor budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "i64", into = "i64")]
pub enum Fanout {
    /// Uniform sample without replacement of at most this many neighbors.
    Limit(usize),
    /// Every neighbor.
    Full,
}

impl Fanout {
    /// `-1` (or any negative value) means the full neighborhood.
    pub fn from_signed(v: i64) -> Fanout {
        if v < 0 {
            Fanout::Full
        } else {
            Fanout::Limit(v as usize)
        }
    }

    pub fn to_signed(self) -> i64 {
        match self {
            Fanout::Limit(s) => s as i64,
            Fanout::Full => -1,
        }
    }

    /// The cap, or `None` for full neighborhoods.
    pub fn limit(self) -> Option<usize> {
        match self {
            Fanout::Limit(s) => Some(s),
            Fanout::Full => None,
        }
    }
}

impl From<i64> for Fanout {
    fn from(v: i64) -> Self {
        Fanout::from_signed(v)
    }
}

impl From<Fanout> for i64 {
    fn from(f: Fanout) -> Self {
        f.to_signed()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledBlock {
    dst_nodes: Vec<usize>,
    src_nodes: Vec<usize>,
    /// `(src_local, dst_local)`, grouped by destination in ascending order.
    edges: Vec<(usize, usize)>,
    dst_degrees: Vec<usize>,
}

impl SampledBlock {
    pub fn dst_nodes(&self) -> &[usize] {
        &self.dst_nodes
    }

    pub fn src_nodes(&self) -> &[usize] {
        &self.src_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn dst_degrees(&self) -> &[usize] {
        &self.dst_degrees
    }

    pub fn num_dst(&self) -> usize {
        self.dst_nodes.len()
    }

    pub fn num_src(&self) -> usize {
        self.src_nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Local source index of every edge.
    pub fn edge_sources(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.0).collect()
    }

    /// Local destination index of every edge (non-decreasing).
    pub fn edge_targets(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.1).collect()
    }

    /// `|dst| × |src|` averaging operator over the sampled in-edges; a
    /// destination without sampled edges takes its own source row.
    pub fn mean_operator(&self) -> SparseMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.num_dst()];
        for &(s, d) in &self.edges {
            rows[d].push((s, 1.0 / self.dst_degrees[d] as f64));
        }
        for (d, row) in rows.iter_mut().enumerate() {
            if row.is_empty() {
                row.push((d, 1.0));
            }
        }
        SparseMatrix::from_rows(self.num_src(), rows).expect("local indices are in range")
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.src_nodes.len() < self.dst_nodes.len()
            || self.src_nodes[..self.dst_nodes.len()] != self.dst_nodes[..]
        {
            return Err(Error::contract("src_nodes must begin with dst_nodes"));
        }
        let mut counted = vec![0usize; self.num_dst()];
        for &(s, d) in &self.edges {
            if s >= self.num_src() || d >= self.num_dst() {
                return Err(Error::contract(format!("edge ({}, {}) out of range", s, d)));
            }
            counted[d] += 1;
        }
        if counted != self.dst_degrees {
            return Err(Error::contract("dst_degrees disagree with edges"));
        }
        if self.edges.windows(2).any(|w| w[0].1 > w[1].1) {
            return Err(Error::contract("edges must be grouped by destination"));
        }
        Ok(())
    }
}

fn check_targets(g: &Graph, targets: &[usize]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::contract("sampling needs at least one target"));
    }
    let mut seen = vec![false; g.num_nodes()];
    for &t in targets {
        if t >= g.num_nodes() {
            return Err(Error::contract(format!(
                "target {} out of range for {} nodes",
                t,
                g.num_nodes()
            )));
        }
        if std::mem::replace(&mut seen[t], true) {
            return Err(Error::contract(format!("duplicate target {}", t)));
        }
    }
    Ok(())
}

/// Samples up to `fanout` in-neighbors of every target.
pub fn sample_block<R: Rng + ?Sized>(
    g: &Graph,
    targets: &[usize],
    fanout: Fanout,
    rng: &mut R,
) -> Result<SampledBlock> {
    sample_block_memo(g, targets, fanout, rng, &mut HashMap::new())
}

/// Like [`sample_block`], but a target already present in `memo` reuses its
/// earlier draw instead of sampling again. New draws are recorded.
fn sample_block_memo<R: Rng + ?Sized>(
    g: &Graph,
    targets: &[usize],
    fanout: Fanout,
    rng: &mut R,
    memo: &mut HashMap<usize, Vec<usize>>,
) -> Result<SampledBlock> {
    check_targets(g, targets)?;
    let mut local: HashMap<usize, usize> = targets.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut src_nodes = targets.to_vec();
    let mut edges = Vec::new();
    let mut dst_degrees = Vec::with_capacity(targets.len());
    for (d, &t) in targets.iter().enumerate() {
        let picks = memo.entry(t).or_insert_with(|| {
            let nb = g.neighbors(t);
            match fanout.limit() {
                Some(s) if s < nb.len() => {
                    let mut idx = rand::seq::index::sample(rng, nb.len(), s).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|i| nb[i]).collect()
                }
                _ => nb.to_vec(),
            }
        });
        for &n in picks.iter() {
            let s = *local.entry(n).or_insert_with(|| {
                src_nodes.push(n);
                src_nodes.len() - 1
            });
            edges.push((s, d));
        }
        dst_degrees.push(picks.len());
    }
    Ok(SampledBlock {
        dst_nodes: targets.to_vec(),
        src_nodes,
        edges,
        dst_degrees,
    })
}

/// Block over every node with every edge; needs no randomness.
pub fn full_block(g: &Graph) -> SampledBlock {
    let n = g.num_nodes();
    let mut edges = Vec::with_capacity(g.num_edges());
    for d in 0..n {
        edges.extend(g.neighbors(d).iter().map(|&s| (s, d)));
    }
    SampledBlock {
        dst_nodes: (0..n).collect(),
        src_nodes: (0..n).collect(),
        edges,
        dst_degrees: (0..n).map(|i| g.degree(i)).collect(),
    }
}

/// Node and edge totals of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BatchCounts {
    /// Distinct nodes whose input rows the batch touches.
    pub nodes: usize,
    /// Sampled edges summed over all blocks.
    pub edges: usize,
}

/// `L` chained blocks for end-to-end training, input-most first:
/// `blocks[l].dst_nodes == blocks[l + 1].src_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct E2EBatch {
    pub blocks: Vec<SampledBlock>,
    pub target_nodes: Vec<usize>,
}

impl E2EBatch {
    pub fn counts(&self) -> BatchCounts {
        BatchCounts {
            nodes: self.blocks.first().map_or(0, SampledBlock::num_src),
            edges: self.blocks.iter().map(SampledBlock::num_edges).sum(),
        }
    }
}

/// Samples an `L`-hop message-flow graph, outermost hop first. A node
/// reached again at a later hop keeps the neighbors drawn for it the first
/// time, so the batch is a sampled computation tree with at most
/// `|targets|·Σ_{l≤L} S^l` nodes.
pub fn build_e2e_batch<R: Rng + ?Sized>(
    g: &Graph,
    targets: &[usize],
    depth: usize,
    fanout: Fanout,
    rng: &mut R,
) -> Result<E2EBatch> {
    if depth == 0 {
        return Err(Error::contract("an end-to-end batch needs at least one layer"));
    }
    let mut blocks = Vec::with_capacity(depth);
    let mut frontier = targets.to_vec();
    let mut memo = HashMap::new();
    for _ in 0..depth {
        let block = sample_block_memo(g, &frontier, fanout, rng, &mut memo)?;
        frontier = block.src_nodes.clone();
        blocks.push(block);
    }
    blocks.reverse();
    Ok(E2EBatch {
        blocks,
        target_nodes: targets.to_vec(),
    })
}

/// Two-hop batch for training a single layer: `prop_block` picks the
/// neighbors averaged into the propagated view, `conv_block` feeds the layer
/// for every node in `prop_block.src_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerwiseBatch {
    pub conv_block: SampledBlock,
    pub prop_block: SampledBlock,
    pub target_nodes: Vec<usize>,
}

impl LayerwiseBatch {
    pub fn counts(&self) -> BatchCounts {
        BatchCounts {
            nodes: self.conv_block.num_src(),
            edges: self.conv_block.num_edges() + self.prop_block.num_edges(),
        }
    }
}

pub fn build_layerwise_batch<R: Rng + ?Sized>(
    g: &Graph,
    targets: &[usize],
    conv_fanout: Fanout,
    prop_fanout: Fanout,
    rng: &mut R,
) -> Result<LayerwiseBatch> {
    if prop_fanout == Fanout::Limit(0) {
        return Err(Error::contract(
            "propagation fanout must sample at least one neighbor",
        ));
    }
    let prop_block = sample_block(g, targets, prop_fanout, rng)?;
    let conv_block = sample_block(g, &prop_block.src_nodes, conv_fanout, rng)?;
    Ok(LayerwiseBatch {
        conv_block,
        prop_block,
        target_nodes: targets.to_vec(),
    })
}
