//! Trained-model directories: one checkpoint per layer plus `manifest.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::numerics::Checkpoint;
use crate::rgi::TrainConfig;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Mode {
    /// Layer-wise training, one RGI objective per layer.
    #[serde(rename = "lrgi")]
    #[value(name = "lrgi")]
    Lrgi,
    /// One RGI objective on the top of the whole stack.
    #[serde(rename = "rgi_e2e")]
    #[value(name = "rgi_e2e")]
    RgiE2e,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lrgi => "lrgi",
            Mode::RgiE2e => "rgi_e2e",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrgi" => Ok(Mode::Lrgi),
            "rgi_e2e" => Ok(Mode::RgiE2e),
            other => Err(Error::Config(format!("unknown mode {:?}", other))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub index: usize,
    pub in_dim: usize,
    pub width: usize,
    pub checkpoint: String,
    /// Stream indices (under the run seed) for initialization, heads and
    /// batch sampling of this layer's training.
    pub init_stream: u64,
    pub heads_stream: u64,
    pub train_stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: Mode,
    pub seed: u64,
    pub dataset: String,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    /// Layers in application order.
    pub layers: Vec<LayerEntry>,
    pub loss_files: Vec<String>,
}

pub fn checkpoint_name(index: usize) -> String {
    format!("layer_{}.ckpt", index)
}

impl Manifest {
    pub fn new(mode: Mode, dataset: &Path, encoder: EncoderConfig, train: TrainConfig, loss_files: Vec<String>) -> Self {
        let top = encoder.num_layers as u64;
        let layers = (1..=encoder.num_layers)
            .map(|l| {
                let own = l as u64;
                let (heads, train) = match mode {
                    Mode::Lrgi => (own, own),
                    Mode::RgiE2e => (top, top),
                };
                LayerEntry {
                    index: l,
                    in_dim: encoder.layer_input_dim(l),
                    width: encoder.width,
                    checkpoint: checkpoint_name(l),
                    init_stream: own,
                    heads_stream: heads,
                    train_stream: train,
                }
            })
            .collect();
        Manifest {
            mode,
            seed: train.seed,
            dataset: dataset.display().to_string(),
            encoder,
            train,
            layers,
            loss_files,
        }
    }
}

/// Writes every layer's checkpoint and the manifest into `dir`.
pub fn save_model(dir: &Path, encoder: &Encoder, manifest: &Manifest) -> Result<()> {
    for (layer, entry) in encoder.layers().iter().zip(&manifest.layers) {
        layer.checkpoint().save(dir.join(&entry.checkpoint))?;
    }
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_model(dir: &Path) -> Result<(Manifest, Encoder)> {
    let path: PathBuf = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut encoder = Encoder::new(manifest.encoder, manifest.seed)?;
    if manifest.layers.len() != encoder.layers().len() {
        return Err(Error::Config(format!(
            "{}: manifest lists {} layers for a {}-layer encoder",
            path.display(),
            manifest.layers.len(),
            encoder.layers().len()
        )));
    }
    for (layer, entry) in encoder.layers_mut().iter_mut().zip(&manifest.layers) {
        let ck = Checkpoint::load(dir.join(&entry.checkpoint))?;
        layer.load_checkpoint(&ck)?;
    }
    Ok((manifest, encoder))
}
