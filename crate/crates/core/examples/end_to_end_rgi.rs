//! Trains the same encoder end to end and layer-wise, and compares loss and
//! batch sizes. With one layer the two runs are identical.
//!
//! cargo run --release --example end_to_end_rgi

use lrgi::encoder::EncoderConfig;
use lrgi::graph::{generate_sbm, SbmConfig};
use lrgi::lrgi::{train_e2e, train_layerwise, training_graph};
use lrgi::numerics::AdamConfig;
use lrgi::rgi::{LossWeights, TrainConfig};

fn main() -> lrgi::Result<()> {
    let g = training_graph(&generate_sbm(&SbmConfig { nodes_per_block: 150, ..SbmConfig::default() })?)?;
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 128,
        weights: LossWeights::new(0.25, 25.0, 20.0),
        adam: AdamConfig::default().with_learning_rate(1e-3),
        ..TrainConfig::default()
    };
    for layers in [1, 3] {
        let enc = EncoderConfig::new(g.feature_dim(), layers, 32);
        let lw = train_layerwise(&enc, &g, &cfg)?;
        let (_, e2e) = train_e2e(&enc, &g, &cfg)?;
        let top = lw.histories.last().unwrap();
        println!(
            "L={}: final loss layer-wise {:.6} / end-to-end {:.6}; mean batch nodes {:.0} / {:.0}",
            layers,
            top.epochs.last().unwrap().total,
            e2e.epochs.last().unwrap().total,
            top.mean_batch_nodes,
            e2e.mean_batch_nodes
        );
    }
    Ok(())
}
