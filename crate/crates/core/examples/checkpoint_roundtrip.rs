//! Saves a trained model directory, loads it back and confirms the
//! embeddings are bit-identical.
//!
//! cargo run --example checkpoint_roundtrip

use std::path::Path;

use lrgi::cli::{load_model, save_model, Manifest, Mode};
use lrgi::encoder::EncoderConfig;
use lrgi::graph::{generate_sbm, SbmConfig};
use lrgi::lrgi::{embed_nodes, train_layerwise, EmbedMode};
use lrgi::rgi::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = generate_sbm(&SbmConfig { nodes_per_block: 50, ..SbmConfig::default() })?;
    let enc = EncoderConfig::new(g.feature_dim(), 2, 16);
    let cfg = TrainConfig { epochs: 3, batch_size: 64, ..TrainConfig::default() };
    let outcome = train_layerwise(&enc, &g, &cfg)?;

    let dir = std::env::temp_dir().join("lrgi_checkpoint_roundtrip");
    std::fs::create_dir_all(&dir)?;
    let manifest = Manifest::new(Mode::Lrgi, Path::new("in-memory"), enc, cfg, Vec::new());
    save_model(&dir, &outcome.encoder, &manifest)?;
    let (_, restored) = load_model(&dir)?;

    let before = embed_nodes(&outcome.encoder, &g, EmbedMode::FullGraph)?;
    let after = embed_nodes(&restored, &g, EmbedMode::FullGraph)?;
    println!("model saved to {}", dir.display());
    println!("embeddings identical after reload: {}", before == after);
    for layer in restored.layers() {
        let ck = layer.checkpoint();
        println!("layer {}: {} tensors", layer.index(), ck.entries().len());
    }
    Ok(())
}
