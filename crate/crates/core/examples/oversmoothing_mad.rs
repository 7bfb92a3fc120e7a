//! Mean average cosine distance by depth: a stack of plain averaging layers
//! against a layer-wise trained encoder.
//!
//! cargo run --release --example oversmoothing_mad

use lrgi::encoder::{Encoder, EncoderConfig, GatLayer};
use lrgi::eval::mad_per_layer;
use lrgi::graph::{generate_sbm, SbmConfig};
use lrgi::lrgi::train_layerwise;
use lrgi::numerics::AdamConfig;
use lrgi::rgi::{LossWeights, TrainConfig};

fn main() -> lrgi::Result<()> {
    let g = generate_sbm(&SbmConfig { nodes_per_block: 150, p_in: 0.08, ..SbmConfig::default() })?;
    let depth = 8;
    let dim = g.feature_dim();

    let mut avg = EncoderConfig::new(dim, depth, dim);
    avg.heads = 2;
    let layers = (1..=depth).map(|l| GatLayer::mean_aggregator(l, dim, 2)).collect::<lrgi::Result<Vec<_>>>()?;
    let averaging = Encoder::from_layers(avg, layers)?;
    let smooth = mad_per_layer(&averaging, &g, g.features())?;

    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 128,
        weights: LossWeights::new(0.25, 25.0, 20.0),
        adam: AdamConfig::default().with_learning_rate(1e-3),
        ..TrainConfig::default()
    };
    let trained = train_layerwise(&EncoderConfig::new(dim, depth, 32), &g, &cfg)?;
    let learned = mad_per_layer(&trained.encoder, &g, g.features())?;

    println!("layer  averaging  layer-wise");
    for (l, (a, b)) in smooth.values.iter().zip(&learned.values).enumerate() {
        println!("{:>5}  {:>9.4}  {:>10.4}", l + 1, a, b);
    }
    Ok(())
}
