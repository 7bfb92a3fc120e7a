//! Immutable CSR graphs and everything built on their structure:
//! mean propagation, neighbor sampling, synthetic generation, subgraphs and
//! dataset files.

mod io;
mod propagate;
mod sampling;
mod sbm;
mod subgraph;

pub use io::{load_dataset, write_dataset, DatasetPaths};
pub use propagate::{propagate, propagate_on_tape};
pub use sampling::{
    build_e2e_batch, build_layerwise_batch, full_block, sample_block, BatchCounts, E2EBatch,
    Fanout, LayerwiseBatch, SampledBlock,
};
pub use sbm::{generate_sbm, SbmConfig};
pub use subgraph::{induced_subgraph, Subgraph};

use crate::error::{Error, Result};
use crate::numerics::{SparseMatrix, Tensor};

/// Node labels: one class per node, or a binary indicator row per node.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Multiclass(Vec<usize>),
    Multilabel { num_labels: usize, values: Vec<bool> },
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Multiclass(c) => c.len(),
            Labels::Multilabel { num_labels, values } => {
                if *num_labels == 0 {
                    0
                } else {
                    values.len() / num_labels
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_multilabel(&self) -> bool {
        matches!(self, Labels::Multilabel { .. })
    }

    /// Number of classes (multiclass: max id + 1).
    pub fn num_classes(&self) -> usize {
        match self {
            Labels::Multiclass(c) => c.iter().max().map_or(0, |m| m + 1),
            Labels::Multilabel { num_labels, .. } => *num_labels,
        }
    }

    pub fn select(&self, nodes: &[usize]) -> Labels {
        match self {
            Labels::Multiclass(c) => Labels::Multiclass(nodes.iter().map(|&i| c[i]).collect()),
            Labels::Multilabel { num_labels, values } => Labels::Multilabel {
                num_labels: *num_labels,
                values: nodes
                    .iter()
                    .flat_map(|&i| values[i * num_labels..(i + 1) * num_labels].iter().copied())
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Ingestion(format!("unknown split {:?}", other))),
        }
    }
}

/// Graph in canonical CSR form: sorted, deduplicated neighbor lists and no
/// self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    indices: Vec<usize>,
    features: Tensor,
    labels: Option<Labels>,
    splits: Option<Vec<Split>>,
}

impl Graph {
    /// CSR from an edge list over `num_nodes` nodes, with an empty (`N×0`)
    /// feature matrix. Unless `directed`, each edge is stored both ways.
    /// Duplicate edges collapse and self-loops are dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)], directed: bool) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(s, d) in edges {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::Ingestion(format!(
                    "edge ({}, {}) out of range for {} nodes",
                    s, d, num_nodes
                )));
            }
            if s == d {
                continue;
            }
            // Neighborhoods are stored on the receiving side: node d
            // aggregates from s.
            adj[d].push(s);
            if !directed {
                adj[s].push(d);
            }
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            indices.extend(list);
            offsets.push(indices.len());
        }
        Ok(Graph {
            offsets,
            indices,
            features: Tensor::zeros(vec![num_nodes, 0]),
            labels: None,
            splits: None,
        })
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != self.num_nodes() {
            return Err(Error::Ingestion(format!(
                "feature matrix {:?} for {} nodes",
                features.shape(),
                self.num_nodes()
            )));
        }
        self.features = features;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::Ingestion(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_splits(mut self, splits: Vec<Split>) -> Result<Self> {
        if splits.len() != self.num_nodes() {
            return Err(Error::Ingestion(format!(
                "{} split entries for {} nodes",
                splits.len(),
                self.num_nodes()
            )));
        }
        self.splits = Some(splits);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored (directed) adjacency entries.
    pub fn num_edges(&self) -> usize {
        self.indices.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn splits(&self) -> Option<&[Split]> {
        self.splits.as_deref()
    }

    /// Node ids assigned to `split`, ascending. Empty when no splits are set.
    pub fn split_nodes(&self, split: Split) -> Vec<usize> {
        self.splits
            .as_deref()
            .map(|s| {
                s.iter()
                    .enumerate()
                    .filter(|(_, &x)| x == split)
                    .map(|(i, _)| i)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.num_nodes() == 0 {
            0.0
        } else {
            self.num_edges() as f64 / self.num_nodes() as f64
        }
    }

    /// Undirected edge list with `src < dst`, one entry per pair.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes())
            .flat_map(|d| {
                self.neighbors(d)
                    .iter()
                    .filter(move |&&s| s < d)
                    .map(move |&s| (s, d))
            })
            .collect()
    }

    /// Whether every stored edge has its reverse stored too.
    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes()).all(|d| {
            self.neighbors(d)
                .iter()
                .all(|&s| self.neighbors(s).binary_search(&d).is_ok())
        })
    }

    /// Row-normalized adjacency `D⁻¹A`; a node with no neighbors maps to
    /// itself so the operator is total.
    pub fn mean_operator(&self) -> SparseMatrix {
        let n = self.num_nodes();
        let rows = (0..n)
            .map(|i| {
                let nb = self.neighbors(i);
                if nb.is_empty() {
                    vec![(i, 1.0)]
                } else {
                    let w = 1.0 / nb.len() as f64;
                    nb.iter().map(|&j| (j, w)).collect()
                }
            })
            .collect();
        SparseMatrix::from_rows(n, rows).expect("neighbor ids are in range")
    }
}

/// One-call construction: edges, features, optional labels and splits.
pub fn build_graph(
    edges: &[(usize, usize)],
    features: Tensor,
    labels: Option<Labels>,
    splits: Option<Vec<Split>>,
    directed: bool,
) -> Result<Graph> {
    let mut g = Graph::from_edges(features.rows(), edges, directed)?.with_features(features)?;
    if let Some(l) = labels {
        g = g.with_labels(l)?;
    }
    if let Some(s) = splits {
        g = g.with_splits(s)?;
    }
    Ok(g)
}
