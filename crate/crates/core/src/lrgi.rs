//! Layer-wise training: each GAT layer is trained with its own RGI objective
//! on the cached outputs of the frozen layers below it.

use crate::encoder::{full_graph_layer_inference, Encoder, EncoderConfig, GatLayer};
use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, sample_block, Fanout, Graph, Split};
use crate::numerics::{Tape, Tensor};
use crate::rgi::{train_rgi_module, HeadPair, RgiHistory, TrainConfig};
use crate::rng::{stream, Stage};

/// Per-layer node embeddings of the training graph. Entry 0 holds the input
/// features, entry `l` the output of layer `l`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    entries: Vec<Tensor>,
}

impl EmbeddingCache {
    pub fn new(features: Tensor) -> Self {
        EmbeddingCache { entries: vec![features] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Tensor> {
        self.entries.get(index)
    }

    pub fn last(&self) -> &Tensor {
        self.entries.last().expect("cache starts with the input features")
    }

    pub fn push(&mut self, t: Tensor) {
        self.entries.push(t);
    }
}

/// State visible to an observer after layer `index` finishes training.
#[derive(Debug)]
pub struct LayerReport<'a> {
    pub index: usize,
    /// Layers trained so far, including this one.
    pub layers: &'a [GatLayer],
    pub history: &'a RgiHistory,
    pub cache: &'a EmbeddingCache,
}

#[derive(Debug, Clone)]
pub struct LayerwiseOutcome {
    pub encoder: Encoder,
    pub cache: EmbeddingCache,
    /// One history per layer, bottom first.
    pub histories: Vec<RgiHistory>,
}

/// Restriction of `g` to its training nodes, or `g` itself when it carries
/// no splits.
pub fn training_graph(g: &Graph) -> Result<Graph> {
    match g.splits() {
        Some(_) => {
            let nodes = g.split_nodes(Split::Train);
            Ok(induced_subgraph(g, &nodes)?.graph)
        }
        None => Ok(g.clone()),
    }
}

fn check_inputs(enc: &EncoderConfig, g: &Graph) -> Result<()> {
    enc.validate()?;
    if enc.input_dim != g.feature_dim() {
        return Err(Error::contract(format!(
            "encoder expects {} input features, graph has {}",
            enc.input_dim,
            g.feature_dim()
        )));
    }
    Ok(())
}

/// Trains the layers of an encoder one at a time on `g` (normally the
/// training subgraph). Layers below the current one stay frozen.
pub fn train_layerwise(enc: &EncoderConfig, g: &Graph, cfg: &TrainConfig) -> Result<LayerwiseOutcome> {
    train_layerwise_with(enc, g, cfg, |_| {})
}

/// [`train_layerwise`] with a callback after each layer.
pub fn train_layerwise_with<F>(
    enc: &EncoderConfig,
    g: &Graph,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<LayerwiseOutcome>
where
    F: FnMut(&LayerReport<'_>),
{
    check_inputs(enc, g)?;
    cfg.validate()?;
    let mut cache = EmbeddingCache::new(g.features().clone());
    let mut layers: Vec<GatLayer> = Vec::with_capacity(enc.num_layers);
    let mut histories = Vec::with_capacity(enc.num_layers);
    for l in 1..=enc.num_layers {
        let mut layer = Encoder::init_layer(enc, l, cfg.seed)?;
        let mut heads = HeadPair::new(
            &format!("layer{}.head", l),
            enc.width,
            &mut stream(cfg.seed, Stage::Heads, l as u64),
        );
        let mut rng = stream(cfg.seed, Stage::Train, l as u64);
        let history = train_rgi_module(
            std::slice::from_mut(&mut layer),
            &mut heads,
            g,
            cache.last(),
            cfg,
            &mut rng,
        )?;
        log::info!(
            "layer {}: {} steps, final loss {:.6}",
            l,
            history.steps(),
            history.epochs.last().map_or(f64::NAN, |t| t.total)
        );
        let next = full_graph_layer_inference(&layer, g, cache.last())?;
        cache.push(next);
        layers.push(layer);
        histories.push(history);
        observer(&LayerReport {
            index: l,
            layers: &layers,
            history: histories.last().expect("just pushed"),
            cache: &cache,
        });
    }
    let encoder = Encoder::from_layers(*enc, layers)?;
    Ok(LayerwiseOutcome {
        encoder,
        cache,
        histories,
    })
}

/// Trains all layers jointly with one RGI objective on the top output.
pub fn train_e2e(enc: &EncoderConfig, g: &Graph, cfg: &TrainConfig) -> Result<(Encoder, RgiHistory)> {
    check_inputs(enc, g)?;
    let mut encoder = Encoder::new(*enc, cfg.seed)?;
    let top = enc.num_layers as u64;
    let mut heads = HeadPair::new("head", enc.width, &mut stream(cfg.seed, Stage::Heads, top));
    let mut rng = stream(cfg.seed, Stage::Train, top);
    let history = train_rgi_module(encoder.layers_mut(), &mut heads, g, g.features(), cfg, &mut rng)?;
    Ok((encoder, history))
}

/// How [`embed_nodes`] picks neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMode {
    /// Every neighbor at every layer; deterministic.
    FullGraph,
    /// A fresh neighbor sample per layer, drawn from the seed.
    Sampled { fanout: Fanout, seed: u64 },
}

/// Top-layer embeddings of every node of `g`.
pub fn embed_nodes(encoder: &Encoder, g: &Graph, mode: EmbedMode) -> Result<Tensor> {
    if g.feature_dim() != encoder.config().input_dim {
        return Err(Error::contract(format!(
            "encoder expects {} input features, graph has {}",
            encoder.config().input_dim,
            g.feature_dim()
        )));
    }
    match mode {
        EmbedMode::FullGraph => Ok(encoder
            .layer_outputs(g, g.features())?
            .pop()
            .expect("encoders have at least one layer")),
        EmbedMode::Sampled { fanout, seed } => {
            let all: Vec<usize> = (0..g.num_nodes()).collect();
            let mut h = g.features().clone();
            for (i, layer) in encoder.layers().iter().enumerate() {
                let mut rng = stream(seed, Stage::Sampling, i as u64 + 1);
                let block = sample_block(g, &all, fanout, &mut rng)?;
                let mut tape = Tape::new();
                let x = tape.constant(h);
                let out = layer.forward(&mut tape, x, &block)?;
                h = tape.value(out).clone();
            }
            Ok(h)
        }
    }
}
