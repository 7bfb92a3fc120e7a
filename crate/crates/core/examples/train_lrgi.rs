//! Trains a three-layer encoder one layer at a time and prints each layer's
//! loss curve.
//!
//! cargo run --release --example train_lrgi

use lrgi::encoder::EncoderConfig;
use lrgi::graph::{generate_sbm, SbmConfig};
use lrgi::lrgi::{train_layerwise_with, training_graph};
use lrgi::numerics::AdamConfig;
use lrgi::rgi::{LossWeights, TrainConfig};

fn main() -> lrgi::Result<()> {
    let g = generate_sbm(&SbmConfig { nodes_per_block: 150, ..SbmConfig::default() })?;
    let train = training_graph(&g)?;
    let enc = EncoderConfig::new(g.feature_dim(), 3, 32);
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 128,
        weights: LossWeights::new(0.25, 25.0, 20.0),
        adam: AdamConfig::default().with_learning_rate(1e-3),
        ..TrainConfig::default()
    };
    let outcome = train_layerwise_with(&enc, &train, &cfg, |report| {
        println!("layer {} done, cache now holds {} tensors", report.index, report.cache.len());
    })?;
    for (l, h) in outcome.histories.iter().enumerate() {
        let first = h.epochs.first().map(|t| t.total).unwrap_or(f64::NAN);
        let last = h.epochs.last().map(|t| t.total).unwrap_or(f64::NAN);
        println!(
            "layer {}: loss {:.4} -> {:.4} over {} steps, at most {} nodes per batch",
            l + 1,
            first,
            last,
            h.steps(),
            h.max_batch_nodes
        );
    }
    Ok(())
}
