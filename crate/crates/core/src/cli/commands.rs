use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_splits, mad_per_layer, EmbeddingSource, ProbeConfig, ProbeResult};
use crate::graph::{
    build_e2e_batch, build_layerwise_batch, generate_sbm, load_dataset, write_dataset, DatasetPaths,
    Fanout, Graph, SbmConfig,
};
use crate::lrgi::{embed_nodes, train_e2e, train_layerwise, training_graph, EmbedMode};
use crate::numerics::{AdamConfig, Tensor};
use crate::rgi::{LossWeights, TrainConfig};
use crate::rng::{stream, Stage};

use super::model::{load_model, save_model, Manifest, Mode};
use super::settings::Settings;
use super::{BenchArgs, DataArgs, EmbedArgs, GenArgs, MadArgs, ProbeArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads the dataset; labels and splits are read only if their files exist.
fn load_data(args: &DataArgs, s: &Settings) -> Result<Graph> {
    let mut paths = DatasetPaths::in_dir(&args.data);
    paths.labels = paths.labels.filter(|p| p.exists());
    paths.splits = paths.splits.filter(|p| p.exists());
    let directed = s.pick("directed", args.directed, false)?;
    load_dataset(&paths, directed)
}

fn fanout(s: &Settings, key: &str, flag: Option<i64>, default: i64) -> Result<Fanout> {
    Ok(Fanout::from_signed(s.pick(key, flag, default)?))
}

pub(super) fn gen(a: &GenArgs, s: &Settings) -> Result<String> {
    let d = SbmConfig::default();
    let cfg = SbmConfig {
        nodes_per_block: s.pick("nodes_per_block", a.nodes_per_block, d.nodes_per_block)?,
        blocks: s.pick("blocks", a.blocks, d.blocks)?,
        p_in: s.pick("p_in", a.p_in, d.p_in)?,
        p_out: s.pick("p_out", a.p_out, d.p_out)?,
        feature_dim: s.pick("feature_dim", a.feature_dim, d.feature_dim)?,
        signal: s.pick("signal", a.signal, d.signal)?,
        feature_noise: s.pick("feature_noise", a.feature_noise, d.feature_noise)?,
        seed: s.pick("seed", a.seed, d.seed)?,
    };
    let g = generate_sbm(&cfg)?;
    write_dataset(&g, &a.out)?;
    Ok(format!(
        "gen: {} nodes, {} undirected edges, mean degree {:.2} -> {}",
        g.num_nodes(),
        g.num_edges() / 2,
        g.mean_degree(),
        a.out.display()
    ))
}

fn train_config(a: &TrainArgs, s: &Settings) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let adam = AdamConfig {
        learning_rate: s.pick("lr", a.lr, d.adam.learning_rate)?,
        weight_decay: s.pick("weight_decay", a.weight_decay, d.adam.weight_decay)?,
        ..d.adam
    };
    let weights = LossWeights {
        rec: s.pick("lambda_rec", a.lambda_rec, d.weights.rec)?,
        var: s.pick("lambda_var", a.lambda_var, d.weights.var)?,
        cov: s.pick("lambda_cov", a.lambda_cov, d.weights.cov)?,
    };
    let cfg = TrainConfig {
        epochs: s.pick("epochs", a.epochs, d.epochs)?,
        batch_size: s.pick("batch_size", a.batch_size, d.batch_size)?,
        conv_fanout: fanout(s, "conv_fanout", a.conv_fanout, d.conv_fanout.to_signed())?,
        prop_fanout: fanout(s, "prop_fanout", a.prop_fanout, d.prop_fanout.to_signed())?,
        prop_steps: s.pick("prop_steps", a.prop_steps, d.prop_steps)?,
        seed: s.pick("seed", a.seed, d.seed)?,
        adam,
        weights,
        prefetch: s.pick("prefetch", a.prefetch, d.prefetch)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub(super) fn train(a: &TrainArgs, s: &Settings) -> Result<String> {
    let mode: Mode = s.pick("mode", a.mode, Mode::Lrgi)?;
    let cfg = train_config(a, s)?;
    let g = load_data(&a.data, s)?;
    let enc = EncoderConfig {
        num_layers: s.pick("layers", a.layers, 2)?,
        width: s.pick("width", a.width, 64)?,
        heads: s.pick("heads", a.heads, 4)?,
        input_dim: g.feature_dim(),
        leaky_slope: s.pick("leaky_slope", a.leaky_slope, 0.2)?,
    };
    enc.validate()?;
    let sub = training_graph(&g)?;
    if sub.num_nodes() < 2 {
        return Err(Error::Degenerate(format!(
            "the training split has {} nodes",
            sub.num_nodes()
        )));
    }

    let (encoder, histories, loss_files) = match mode {
        Mode::Lrgi => {
            let out = train_layerwise(&enc, &sub, &cfg)?;
            let files = (1..=enc.num_layers).map(|l| format!("losses_layer_{}.csv", l)).collect();
            (out.encoder, out.histories, files)
        }
        Mode::RgiE2e => {
            let (encoder, history) = train_e2e(&enc, &sub, &cfg)?;
            (encoder, vec![history], vec!["losses.csv".to_string()])
        }
    };
    create_dir(&a.out)?;
    for (h, name) in histories.iter().zip(&loss_files) {
        h.write_csv(&a.out.join(name))?;
    }
    let manifest = Manifest::new(mode, &a.data.data, enc, cfg, loss_files);
    save_model(&a.out, &encoder, &manifest)?;
    let last = histories
        .last()
        .and_then(|h| h.epochs.last())
        .map_or(f64::NAN, |t| t.total);
    Ok(format!(
        "train: mode {}, {} layers of width {} on {} training nodes, final loss {:.6} -> {}",
        mode.as_str(),
        enc.num_layers,
        enc.width,
        sub.num_nodes(),
        last,
        a.out.display()
    ))
}

fn tensor_text(t: &Tensor) -> String {
    let mut out = String::new();
    for i in 0..t.rows() {
        let row: Vec<String> = t.row(i).iter().map(|v| format!("{}", v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub(super) fn embed(a: &EmbedArgs, s: &Settings) -> Result<String> {
    let g = load_data(&a.data, s)?;
    let (_, encoder) = load_model(&a.model)?;
    let seed = s.pick("seed", a.seed, 0u64)?;
    let mode = match a.fanout {
        None => EmbedMode::FullGraph,
        Some(f) => EmbedMode::Sampled {
            fanout: Fanout::from_signed(f),
            seed,
        },
    };
    let z = embed_nodes(&encoder, &g, mode)?;
    write_file(&a.out, &tensor_text(&z))?;
    Ok(format!("embed: {}x{} embeddings -> {}", z.rows(), z.cols(), a.out.display()))
}

#[derive(Serialize)]
struct ProbeReport<'a> {
    source: &'a str,
    #[serde(flatten)]
    result: &'a ProbeResult,
}

pub(super) fn probe(a: &ProbeArgs, s: &Settings) -> Result<String> {
    let g = load_data(&a.data, s)?;
    let d = ProbeConfig::default();
    let cfg = ProbeConfig {
        epochs: s.pick("probe_epochs", a.probe_epochs, d.epochs)?,
        adam: AdamConfig {
            learning_rate: s.pick("probe_lr", a.probe_lr, d.adam.learning_rate)?,
            weight_decay: s.pick("probe_weight_decay", a.probe_weight_decay, d.adam.weight_decay)?,
            ..d.adam
        },
        ..d
    };
    let (source, result) = match (&a.model, a.raw) {
        (_, true) => ("raw", evaluate_splits(EmbeddingSource::Raw, &g, &cfg)?),
        (Some(dir), false) => {
            let (_, encoder) = load_model(dir)?;
            ("encoder", evaluate_splits(EmbeddingSource::Encoder(&encoder), &g, &cfg)?)
        }
        (None, false) => return Err(Error::Config("probe needs --model or --raw".into())),
    };
    let text = serde_json::to_string_pretty(&ProbeReport {
        source,
        result: &result,
    })?;
    write_file(&a.out, &(text + "\n"))?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.4}", x));
    Ok(format!(
        "probe ({}): {} train {:.4} val {} test {} -> {}",
        source,
        result.metric.as_str(),
        result.train,
        fmt(result.val),
        fmt(result.test),
        a.out.display()
    ))
}

pub(super) fn mad(a: &MadArgs, s: &Settings) -> Result<String> {
    let g = load_data(&a.data, s)?;
    let (_, encoder) = load_model(&a.model)?;
    let report = mad_per_layer(&encoder, &g, g.features())?;
    write_file(&a.out, &report.to_csv())?;
    let values: Vec<String> = report.values.iter().map(|v| format!("{:.4}", v)).collect();
    Ok(format!("mad: [{}] -> {}", values.join(", "), a.out.display()))
}

/// Mean per-batch counts for one batching scheme at one depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub mode: &'static str,
    pub depth: usize,
    pub batches: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
}

/// Samples `batches` random target sets of size `batch_size` for every depth
/// and averages the node and edge counts of end-to-end batches (`depth`
/// hops with `conv` fanout) and layer-wise batches (one `prop` hop plus one
/// `conv` hop).
pub fn bench_sampling(
    g: &Graph,
    depths: &[usize],
    batch_size: usize,
    conv: Fanout,
    prop: Fanout,
    batches: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if batch_size == 0 || batch_size > g.num_nodes() || batches == 0 {
        return Err(Error::Config(format!(
            "cannot draw {} batches of {} targets from {} nodes",
            batches,
            batch_size,
            g.num_nodes()
        )));
    }
    let mut rows = Vec::new();
    let mut order: Vec<usize> = (0..g.num_nodes()).collect();
    for &depth in depths {
        let mut rng = stream(seed, Stage::Sampling, depth as u64);
        let (mut en, mut ee, mut ln, mut le) = (0usize, 0usize, 0usize, 0usize);
        for _ in 0..batches {
            order.shuffle(&mut rng);
            let targets = &order[..batch_size];
            let e = build_e2e_batch(g, targets, depth, conv, &mut rng)?.counts();
            let l = build_layerwise_batch(g, targets, conv, prop, &mut rng)?.counts();
            en += e.nodes;
            ee += e.edges;
            ln += l.nodes;
            le += l.edges;
        }
        let n = batches as f64;
        rows.push(BenchRow {
            mode: "e2e",
            depth,
            batches,
            mean_nodes: en as f64 / n,
            mean_edges: ee as f64 / n,
        });
        rows.push(BenchRow {
            mode: "layerwise",
            depth,
            batches,
            mean_nodes: ln as f64 / n,
            mean_edges: le as f64 / n,
        });
    }
    Ok(rows)
}

pub(super) fn bench(a: &BenchArgs, s: &Settings) -> Result<String> {
    let depths_raw: String = s.pick("depths", a.depths.clone(), "3,6".to_string())?;
    let depths = depths_raw
        .split(',')
        .map(|d| d.trim().parse::<usize>().ok().filter(|&v| v > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config(format!("invalid depth list {:?}", depths_raw)))?;
    let batch_size = s.pick("batch_size", a.batch_size, 64)?;
    let conv = fanout(s, "conv_fanout", a.conv_fanout, 10)?;
    let prop = fanout(s, "prop_fanout", a.prop_fanout, 5)?;
    let batches = s.pick("batches", a.batches, 100)?;
    let seed = s.pick("seed", a.seed, 0)?;
    let g = load_data(&a.data, s)?;
    let rows = bench_sampling(&g, &depths, batch_size, conv, prop, batches, seed)?;
    let mut out = String::from("mode,depth,batches,mean_nodes,mean_edges\n");
    for r in &rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.mode, r.depth, r.batches, r.mean_nodes, r.mean_edges);
    }
    write_file(&a.out, &out)?;
    let cells: Vec<String> = rows
        .iter()
        .map(|r| format!("{}@{}: {:.0} nodes", r.mode, r.depth, r.mean_nodes))
        .collect();
    Ok(format!("bench: {} -> {}", cells.join(", "), a.out.display()))
}
