//! GAT encoder layers with linear skip connections and ELU.
//!
//! For each head `h` with projection `Wʰ` and attention vectors `aʰ_src`,
//! `aʰ_dst`, an edge `j → i` gets the score
//! `LeakyReLU(aʰ_src·Wʰxⱼ + aʰ_dst·Wʰxᵢ)`; scores are softmax-normalized over
//! the in-edges of `i` and weight the projected messages `Wʰxⱼ`. Heads are
//! concatenated to width `D`, then the layer outputs
//! `ELU(heads + W_skip·xᵢ + b)`. ELU is applied after the skip and bias are
//! added. A destination without in-edges only gets the skip and bias terms.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{full_block, E2EBatch, Graph, SampledBlock};
use crate::numerics::{Checkpoint, Parameter, Tape, Tensor, Var};
use crate::rng::{stream, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub width: usize,
    pub heads: usize,
    pub input_dim: usize,
    pub leaky_slope: f64,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, num_layers: usize, width: usize) -> Self {
        EncoderConfig {
            num_layers,
            width,
            heads: 4,
            input_dim,
            leaky_slope: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.heads == 0 || self.width < self.heads || !self.width.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "width {} must be a positive multiple of heads {}",
                self.width, self.heads
            )));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        Ok(())
    }

    /// Input width of layer `index` (1-based).
    pub fn layer_input_dim(&self, index: usize) -> usize {
        if index == 1 {
            self.input_dim
        } else {
            self.width
        }
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor::matrix(rows, cols, values).expect("shape matches")
}

/// Learnable state of one GAT layer.
#[derive(Debug, Clone)]
pub struct GatLayer {
    index: usize,
    in_dim: usize,
    width: usize,
    leaky_slope: f64,
    head_weights: Vec<Parameter>,
    attn_src: Vec<Parameter>,
    attn_dst: Vec<Parameter>,
    skip_weight: Parameter,
    bias: Parameter,
}

impl GatLayer {
    /// Fresh layer with Glorot-uniform weights and zero bias. `index` is
    /// 1-based and ends up in parameter names.
    pub fn new<R: Rng + ?Sized>(
        index: usize,
        in_dim: usize,
        width: usize,
        heads: usize,
        leaky_slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) || width < heads {
            return Err(Error::Config(format!(
                "width {} not divisible into {} heads",
                width, heads
            )));
        }
        let k = width / heads;
        let p = |name: String, t: Tensor| Parameter::new(format!("layer{}.{}", index, name), t);
        let mut head_weights = Vec::with_capacity(heads);
        let mut attn_src = Vec::with_capacity(heads);
        let mut attn_dst = Vec::with_capacity(heads);
        for h in 0..heads {
            head_weights.push(p(format!("head{}.weight", h), glorot(in_dim, k, rng)));
            attn_src.push(p(format!("head{}.attn_src", h), glorot(k, 1, rng)));
            attn_dst.push(p(format!("head{}.attn_dst", h), glorot(k, 1, rng)));
        }
        Ok(GatLayer {
            index,
            in_dim,
            width,
            leaky_slope,
            head_weights,
            attn_src,
            attn_dst,
            skip_weight: p("skip.weight".into(), glorot(in_dim, width, rng)),
            bias: p("bias".into(), Tensor::zeros(vec![width])),
        })
    }

    /// A layer that outputs `ELU(mean of neighbor inputs)`: identity head
    /// projections, zero attention, zero skip and bias.
    pub fn mean_aggregator(index: usize, dim: usize, heads: usize) -> Result<Self> {
        let mut rng = stream(0, Stage::Init, index as u64);
        let mut layer = GatLayer::new(index, dim, dim, heads, 0.2, &mut rng)?;
        let k = dim / heads;
        for (h, w) in layer.head_weights.iter_mut().enumerate() {
            let mut t = Tensor::zeros(vec![dim, k]);
            for c in 0..k {
                t.values_mut()[(h * k + c) * k + c] = 1.0;
            }
            w.assign(t)?;
        }
        for a in layer.attn_src.iter_mut().chain(layer.attn_dst.iter_mut()) {
            a.assign(Tensor::zeros(vec![k, 1]))?;
        }
        layer.skip_weight.assign(Tensor::zeros(vec![dim, dim]))?;
        Ok(layer)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn heads(&self) -> usize {
        self.head_weights.len()
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = Vec::new();
        for h in 0..self.heads() {
            out.push(&self.head_weights[h]);
            out.push(&self.attn_src[h]);
            out.push(&self.attn_dst[h]);
        }
        out.push(&self.skip_weight);
        out.push(&self.bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = Vec::new();
        for ((w, s), d) in self
            .head_weights
            .iter_mut()
            .zip(self.attn_src.iter_mut())
            .zip(self.attn_dst.iter_mut())
        {
            out.push(w);
            out.push(s);
            out.push(d);
        }
        out.push(&mut self.skip_weight);
        out.push(&mut self.bias);
        out
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(self.parameters())
    }

    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.load_into(self.parameters_mut())
    }

    /// Records the layer on `tape`. `x_src` holds one row per
    /// `block.src_nodes()`; the result has one row per destination.
    pub fn forward(&self, tape: &mut Tape, x_src: Var, block: &SampledBlock) -> Result<Var> {
        self.forward_with_attention(tape, x_src, block).map(|(out, _)| out)
    }

    /// Like [`forward`](Self::forward), also returning each head's
    /// normalized attention coefficients (one per block edge).
    pub fn forward_with_attention(
        &self,
        tape: &mut Tape,
        x_src: Var,
        block: &SampledBlock,
    ) -> Result<(Var, Vec<Var>)> {
        let x = tape.value(x_src);
        if x.rows() != block.num_src() || x.cols() != self.in_dim {
            return Err(Error::dim(format!(
                "layer {} expects {}x{} input, got {:?}",
                self.index,
                block.num_src(),
                self.in_dim,
                x.shape()
            )));
        }
        let n_dst = block.num_dst();
        let edge_src: Arc<[usize]> = block.edge_sources().into();
        let edge_dst: Arc<[usize]> = block.edge_targets().into();
        let x_dst = tape.slice_rows(x_src, 0, n_dst)?;

        let mut head_outputs = Vec::with_capacity(self.heads());
        let mut attention = Vec::with_capacity(self.heads());
        for h in 0..self.heads() {
            let w = tape.param(&self.head_weights[h]);
            let a_src = tape.param(&self.attn_src[h]);
            let a_dst = tape.param(&self.attn_dst[h]);
            let proj = tape.matmul(x_src, w)?;
            let score_src = tape.matmul(proj, a_src)?;
            let proj_dst = tape.slice_rows(proj, 0, n_dst)?;
            let score_dst = tape.matmul(proj_dst, a_dst)?;
            let e_src = tape.gather_rows(score_src, Arc::clone(&edge_src))?;
            let e_dst = tape.gather_rows(score_dst, Arc::clone(&edge_dst))?;
            let e = tape.add(e_src, e_dst)?;
            let e = tape.leaky_relu(e, self.leaky_slope);
            let alpha = tape.segment_softmax(e, Arc::clone(&edge_dst))?;
            let messages = tape.gather_rows(proj, Arc::clone(&edge_src))?;
            let weighted = tape.scale_rows(messages, alpha)?;
            head_outputs.push(tape.segment_sum(weighted, Arc::clone(&edge_dst), n_dst)?);
            attention.push(alpha);
        }
        let heads = tape.concat_cols(&head_outputs)?;
        let skip_w = tape.param(&self.skip_weight);
        let skip = tape.matmul(x_dst, skip_w)?;
        let pre = tape.add(heads, skip)?;
        let bias = tape.param(&self.bias);
        let pre = tape.add_row_vector(pre, bias)?;
        Ok((tape.elu(pre), attention))
    }
}

/// Runs `layers` over chained `blocks` (input-most first). `x` holds one row
/// per `blocks[0].src_nodes()`; the result has one row per destination of
/// the last block.
pub fn encoder_forward(tape: &mut Tape, layers: &[GatLayer], x: Var, blocks: &[SampledBlock]) -> Result<Var> {
    if layers.len() != blocks.len() {
        return Err(Error::contract(format!(
            "{} layers but {} blocks",
            layers.len(),
            blocks.len()
        )));
    }
    let mut h = x;
    for (layer, block) in layers.iter().zip(blocks) {
        h = layer.forward(tape, h, block)?;
    }
    Ok(h)
}

/// Full-neighborhood output of one layer for every node of `g`, without
/// gradients. `x` has one row per node.
pub fn full_graph_layer_inference(layer: &GatLayer, g: &Graph, x: &Tensor) -> Result<Tensor> {
    if x.rows() != g.num_nodes() {
        return Err(Error::dim(format!(
            "{} input rows for {} nodes",
            x.rows(),
            g.num_nodes()
        )));
    }
    let block = full_block(g);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let out = layer.forward(&mut tape, xv, &block)?;
    Ok(tape.value(out).clone())
}

/// A stack of GAT layers.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    layers: Vec<GatLayer>,
}

impl Encoder {
    /// Randomly initialized encoder; layer `l` draws from its own stream.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = (1..=config.num_layers)
            .map(|l| Encoder::init_layer(&config, l, seed))
            .collect::<Result<_>>()?;
        Ok(Encoder { config, layers })
    }

    pub(crate) fn init_layer(config: &EncoderConfig, index: usize, seed: u64) -> Result<GatLayer> {
        let mut rng = stream(seed, Stage::Init, index as u64);
        GatLayer::new(
            index,
            config.layer_input_dim(index),
            config.width,
            config.heads,
            config.leaky_slope,
            &mut rng,
        )
    }

    /// Assembles an encoder from already built layers.
    pub fn from_layers(config: EncoderConfig, layers: Vec<GatLayer>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.num_layers {
            return Err(Error::contract(format!(
                "config has {} layers, got {}",
                config.num_layers,
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() != config.layer_input_dim(i + 1) || l.width() != config.width {
                return Err(Error::dim(format!("layer {} does not match the config", i + 1)));
            }
        }
        Ok(Encoder { config, layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layers(&self) -> &[GatLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [GatLayer] {
        &mut self.layers
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(GatLayer::parameters_mut).collect()
    }

    /// Forward pass over a sampled batch; `features` has one row per node of
    /// the graph the batch was sampled from.
    pub fn forward_batch(&self, tape: &mut Tape, batch: &E2EBatch, features: &Tensor) -> Result<Var> {
        let first = batch
            .blocks
            .first()
            .ok_or_else(|| Error::contract("empty batch"))?;
        let x = tape.constant(features.select_rows(first.src_nodes())?);
        encoder_forward(tape, &self.layers, x, &batch.blocks)
    }

    /// Every layer's full-graph output, in order.
    pub fn layer_outputs(&self, g: &Graph, features: &Tensor) -> Result<Vec<Tensor>> {
        if features.cols() != self.config.input_dim {
            return Err(Error::contract(format!(
                "encoder expects {} input features, graph has {}",
                self.config.input_dim,
                features.cols()
            )));
        }
        let mut out: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = out.last().unwrap_or(features);
            let next = full_graph_layer_inference(layer, g, input)?;
            out.push(next);
        }
        Ok(out)
    }
}
