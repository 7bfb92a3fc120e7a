//! Fits linear probes on raw features and on learned embeddings.
//!
//! cargo run --release --example linear_probe

use lrgi::encoder::EncoderConfig;
use lrgi::eval::{evaluate_splits, EmbeddingSource, ProbeConfig};
use lrgi::graph::{generate_sbm, SbmConfig};
use lrgi::lrgi::{train_layerwise, training_graph};
use lrgi::numerics::AdamConfig;
use lrgi::rgi::{LossWeights, TrainConfig};

fn main() -> lrgi::Result<()> {
    let g = generate_sbm(&SbmConfig::default())?;
    let cfg = TrainConfig {
        epochs: 100,
        batch_size: 256,
        weights: LossWeights::new(0.25, 25.0, 20.0),
        adam: AdamConfig::default().with_learning_rate(1e-3),
        ..TrainConfig::default()
    };
    let outcome = train_layerwise(&EncoderConfig::new(g.feature_dim(), 2, 32), &training_graph(&g)?, &cfg)?;
    let probe = ProbeConfig::default();
    let raw = evaluate_splits(EmbeddingSource::Raw, &g, &probe)?;
    let learned = evaluate_splits(EmbeddingSource::Encoder(&outcome.encoder), &g, &probe)?;
    for (name, r) in [("raw features", raw), ("embeddings", learned)] {
        println!(
            "{:<13} {} train {:.3} val {:.3} test {:.3}",
            name,
            r.metric.as_str(),
            r.train,
            r.val.unwrap_or(f64::NAN),
            r.test.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
