use std::io::Write as _;
use std::path::Path;
use std::sync::mpsc::sync_channel;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encoder_forward, GatLayer};
use crate::error::{Error, Result};
use crate::graph::{build_e2e_batch, BatchCounts, Fanout, Graph, SampledBlock};
use crate::numerics::{adam_step, AdamConfig, Parameter, Tape, Tensor, Var};

use super::loss::{rgi_loss, LossWeights, ReconstructionHead, RgiLossTerms};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Neighbors sampled per node for the encoder's input blocks.
    pub conv_fanout: Fanout,
    /// Neighbors sampled per node when forming the propagated view.
    pub prop_fanout: Fanout,
    /// Propagation steps of the propagated view.
    pub prop_steps: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    /// Batches sampled ahead on a worker thread; 0 samples inline.
    pub prefetch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 512,
            conv_fanout: Fanout::Limit(10),
            prop_fanout: Fanout::Limit(5),
            prop_steps: 1,
            seed: 0,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            prefetch: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if self.prop_steps == 0 {
            return Err(Error::Config("at least one propagation step is required".into()));
        }
        if self.prop_fanout == Fanout::Limit(0) {
            return Err(Error::Config("propagation fanout must be positive or -1".into()));
        }
        self.adam.validate()?;
        self.weights.validate()
    }
}

/// Sampled blocks for one training step. `prop_blocks` lead from the
/// encoder outputs to the targets; `conv_blocks` feed the encoder for every
/// node in `prop_blocks[0].src_nodes()`. Both chains are input-most first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgiBatch {
    pub target_nodes: Vec<usize>,
    pub prop_blocks: Vec<SampledBlock>,
    pub conv_blocks: Vec<SampledBlock>,
}

impl RgiBatch {
    /// Samples the propagation chain first and the encoder chain second.
    pub fn sample<R: Rng + ?Sized>(
        g: &Graph,
        targets: &[usize],
        depth: usize,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if cfg.prop_steps == 0 || cfg.prop_fanout == Fanout::Limit(0) {
            return Err(Error::contract("the propagated view needs at least one sampled hop"));
        }
        let prop = build_e2e_batch(g, targets, cfg.prop_steps, cfg.prop_fanout, rng)?;
        let conv = build_e2e_batch(g, prop.blocks[0].src_nodes(), depth, cfg.conv_fanout, rng)?;
        Ok(RgiBatch {
            target_nodes: targets.to_vec(),
            prop_blocks: prop.blocks,
            conv_blocks: conv.blocks,
        })
    }

    pub fn counts(&self) -> BatchCounts {
        BatchCounts {
            nodes: self.conv_blocks[0].num_src(),
            edges: self
                .conv_blocks
                .iter()
                .chain(&self.prop_blocks)
                .map(SampledBlock::num_edges)
                .sum(),
        }
    }
}

/// Anything trainable with the RGI objective: a stack of layers consuming
/// chained blocks.
pub trait RgiEncoder {
    fn depth(&self) -> usize;
    fn forward(&self, tape: &mut Tape, x: Var, blocks: &[SampledBlock]) -> Result<Var>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;
}

impl RgiEncoder for [GatLayer] {
    fn depth(&self) -> usize {
        self.len()
    }

    fn forward(&self, tape: &mut Tape, x: Var, blocks: &[SampledBlock]) -> Result<Var> {
        encoder_forward(tape, self, x, blocks)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.iter_mut().flat_map(GatLayer::parameters_mut).collect()
    }
}

/// The two reconstruction heads trained alongside one module.
#[derive(Debug, Clone)]
pub struct HeadPair {
    /// Reconstructs the local view from the propagated one.
    pub phi: ReconstructionHead,
    /// Reconstructs the propagated view from the local one.
    pub psi: ReconstructionHead,
}

impl HeadPair {
    pub fn new<R: Rng + ?Sized>(prefix: &str, width: usize, rng: &mut R) -> Self {
        let phi = ReconstructionHead::new(&format!("{}.phi", prefix), width, rng);
        let psi = ReconstructionHead::new(&format!("{}.psi", prefix), width, rng);
        HeadPair { phi, psi }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.phi.parameters_mut();
        p.extend(self.psi.parameters_mut());
        p
    }
}

/// Loss trajectory and batch sizes of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RgiHistory {
    /// Mean terms over the batches of each epoch.
    pub epochs: Vec<RgiLossTerms>,
    /// Total loss of every step, in order.
    pub batch_totals: Vec<f64>,
    pub max_batch_nodes: usize,
    pub mean_batch_nodes: f64,
    pub mean_batch_edges: f64,
}

impl RgiHistory {
    pub fn steps(&self) -> usize {
        self.batch_totals.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,rec_u,rec_v,var_u,var_v,cov_u,cov_v,total\n");
        for (e, t) in self.epochs.iter().enumerate() {
            let row: Vec<String> = t.as_array().iter().map(|v| format!("{}", v)).collect();
            out.push_str(&format!("{},{}\n", e + 1, row.join(",")));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// One gradient step on `batch`; returns the loss terms before the update.
pub fn rgi_step<E: RgiEncoder + ?Sized>(
    encoder: &mut E,
    heads: &mut HeadPair,
    inputs: &Tensor,
    batch: &RgiBatch,
    cfg: &TrainConfig,
) -> Result<RgiLossTerms> {
    let mut tape = Tape::new();
    let x = tape.constant(inputs.select_rows(batch.conv_blocks[0].src_nodes())?);
    let u_all = encoder.forward(&mut tape, x, &batch.conv_blocks)?;
    let mut v = u_all;
    for block in &batch.prop_blocks {
        v = tape.sparse_matmul(Arc::new(block.mean_operator()), v)?;
    }
    // Every src list starts with its dst list, so the targets lead u_all.
    let u = tape.slice_rows(u_all, 0, batch.target_nodes.len())?;
    let loss = rgi_loss(&mut tape, u, v, &heads.phi, &heads.psi, &cfg.weights)?;
    let mut params = encoder.parameters_mut();
    params.extend(heads.parameters_mut());
    tape.backward_into(loss.total, &mut params)?;
    adam_step(&mut params, &cfg.adam)?;
    Ok(loss.terms)
}

/// Trains `encoder` and `heads` with the RGI objective on `g`, where
/// `inputs` holds one input row per node of `g`. Shuffling and sampling both
/// draw from `rng`, so a fixed stream reproduces the run exactly.
pub fn train_rgi_module<E: RgiEncoder + ?Sized, R: Rng + Send + ?Sized>(
    encoder: &mut E,
    heads: &mut HeadPair,
    g: &Graph,
    inputs: &Tensor,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<RgiHistory> {
    cfg.validate()?;
    if inputs.rows() != g.num_nodes() {
        return Err(Error::dim(format!(
            "{} input rows for {} nodes",
            inputs.rows(),
            g.num_nodes()
        )));
    }
    if g.num_nodes() < 2 {
        return Err(Error::Degenerate("training needs at least two nodes".into()));
    }
    let depth = encoder.depth();
    let mut history = RgiHistory::default();
    let mut node_total = 0usize;
    let mut edge_total = 0usize;

    let mut consume = |history: &mut RgiHistory, epoch_sum: &mut ([f64; 7], usize), batch: RgiBatch| -> Result<()> {
        let counts = batch.counts();
        history.max_batch_nodes = history.max_batch_nodes.max(counts.nodes);
        node_total += counts.nodes;
        edge_total += counts.edges;
        let terms = rgi_step(encoder, heads, inputs, &batch, cfg)?;
        if !terms.total.is_finite() {
            return Err(Error::Degenerate(format!("loss became {}", terms.total)));
        }
        history.batch_totals.push(terms.total);
        for (acc, v) in epoch_sum.0.iter_mut().zip(terms.as_array()) {
            *acc += v;
        }
        epoch_sum.1 += 1;
        Ok(())
    };

    let sampled_epochs = |rng: &mut R, mut emit: Box<dyn FnMut(Option<Result<RgiBatch>>) -> bool + '_>| {
        let mut order: Vec<usize> = (0..g.num_nodes()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.batch_size) {
                if chunk.len() < 2 {
                    continue;
                }
                if !emit(Some(RgiBatch::sample(g, chunk, depth, cfg, rng))) {
                    return;
                }
            }
            if !emit(None) {
                return;
            }
        }
    };

    // `None` marks the end of an epoch.
    let mut handle = |history: &mut RgiHistory, epoch_sum: &mut ([f64; 7], usize), item: Option<Result<RgiBatch>>| -> Result<()> {
        match item {
            Some(batch) => consume(history, epoch_sum, batch?),
            None => {
                let n = epoch_sum.1.max(1) as f64;
                history.epochs.push(RgiLossTerms::from_array(epoch_sum.0.map(|v| v / n)));
                *epoch_sum = ([0.0; 7], 0);
                Ok(())
            }
        }
    };

    let mut epoch_sum = ([0.0; 7], 0usize);
    if cfg.prefetch == 0 {
        let mut failure = None;
        sampled_epochs(
            rng,
            Box::new(|item| match handle(&mut history, &mut epoch_sum, item) {
                Ok(()) => true,
                Err(e) => {
                    failure = Some(e);
                    false
                }
            }),
        );
        if let Some(e) = failure {
            return Err(e);
        }
    } else {
        let (tx, rx) = sync_channel::<Option<Result<RgiBatch>>>(cfg.prefetch);
        std::thread::scope(|scope| -> Result<()> {
            scope.spawn(move || sampled_epochs(rng, Box::new(move |item| tx.send(item).is_ok())));
            for item in rx.iter() {
                handle(&mut history, &mut epoch_sum, item)?;
            }
            Ok(())
        })?;
    }

    let steps = history.steps().max(1) as f64;
    history.mean_batch_nodes = node_total as f64 / steps;
    history.mean_batch_edges = edge_total as f64 / steps;
    Ok(history)
}
