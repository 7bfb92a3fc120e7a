//! Frozen-embedding evaluation: linear probes and the MAD smoothness
//! diagnostic.

mod mad;
mod probe;

pub use mad::{mad, mad_per_layer, MadReport};
pub use probe::{
    accuracy, fit_probe, linear_probe, micro_f1, LinearProbe, Metric, ProbeConfig, ProbeData,
    ProbeResult,
};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::lrgi::{embed_nodes, training_graph, EmbedMode};
use crate::numerics::Tensor;

/// Where the probe's inputs come from.
#[derive(Debug, Clone, Copy)]
pub enum EmbeddingSource<'a> {
    /// The raw node features.
    Raw,
    /// A trained encoder: training-node embeddings are computed on the
    /// training subgraph alone, validation and test embeddings on the full
    /// graph.
    Encoder(&'a Encoder),
}

/// Inductive probe over the graph's splits.
pub fn evaluate_splits(source: EmbeddingSource<'_>, g: &Graph, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::contract("probing needs node labels"))?;
    if g.splits().is_none() {
        return Err(Error::contract("probing needs train/val/test splits"));
    }
    let train_nodes = g.split_nodes(Split::Train);
    let val_nodes = g.split_nodes(Split::Val);
    let test_nodes = g.split_nodes(Split::Test);
    let (train_z, full_z): (Tensor, Tensor) = match source {
        EmbeddingSource::Raw => (g.features().select_rows(&train_nodes)?, g.features().clone()),
        EmbeddingSource::Encoder(enc) => {
            // The training subgraph keeps train nodes in ascending order.
            let sub = training_graph(g)?;
            (
                embed_nodes(enc, &sub, EmbedMode::FullGraph)?,
                embed_nodes(enc, g, EmbedMode::FullGraph)?,
            )
        }
    };
    let (ytr, yva, yte) = (
        labels.select(&train_nodes),
        labels.select(&val_nodes),
        labels.select(&test_nodes),
    );
    let (zva, zte) = (full_z.select_rows(&val_nodes)?, full_z.select_rows(&test_nodes)?);
    linear_probe(
        ProbeData::new(&train_z, &ytr),
        ProbeData::new(&zva, &yva),
        ProbeData::new(&zte, &yte),
        cfg,
    )
}
