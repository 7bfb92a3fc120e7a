//! Shared oracles for the integration tests: finite differences, random
//! inputs and dense re-implementations.
#![allow(dead_code)]

use lrgi::encoder::GatLayer;
use lrgi::graph::Graph;
use lrgi::numerics::{Parameter, Tape, Tensor, Var};
use lrgi::rgi::{HeadPair, LossWeights, ReconstructionHead, RgiLossTerms};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in `[lo, hi]`.
pub fn rand_tensor(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let v = (0..rows * cols).map(|_| rng.random_range(lo..=hi)).collect();
    Tensor::matrix(rows, cols, v).unwrap()
}

pub fn rand_vector(rng: &mut impl Rng, len: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::vector((0..len).map(|_| rng.random_range(lo..=hi)).collect())
}

/// Erdős–Rényi graph with features in `[-2, 2]`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, feature_dim: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let x = rand_tensor(rng, n, feature_dim, -2.0, 2.0);
    Graph::from_edges(n, &edges, false).unwrap().with_features(x).unwrap()
}

pub fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for &j in g.neighbors(i) {
            row[j] = 1.0;
        }
    }
    a
}

/// `D⁻¹A`, with an identity row for isolated nodes.
pub fn dense_mean_operator(g: &Graph) -> Vec<Vec<f64>> {
    let mut a = dense_adjacency(g);
    for (i, row) in a.iter_mut().enumerate() {
        let d: f64 = row.iter().sum();
        if d == 0.0 {
            row[i] = 1.0;
        } else {
            row.iter_mut().for_each(|v| *v /= d);
        }
    }
    a
}

pub fn dense_matmul(a: &[Vec<f64>], b: &Tensor) -> Tensor {
    let (n, m) = (a.len(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for (k, &aik) in a[i].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += aik * b.get(k, j);
            }
        }
    }
    Tensor::matrix(n, m, out).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-5)`, over whole gradient vectors. The floor
/// keeps central-difference roundoff (about 1e-11 per entry) from reading as
/// a full relative error when the true gradient is exactly zero, e.g. a
/// destination attention vector whose segments all sit on one side of the
/// LeakyReLU kink.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    diff / scale.max(1e-5)
}

/// Gradient of a scalar function of several tensors: analytic via the tape
/// against central differences. Returns the worst relative error over the
/// inputs.
pub fn check_gradient(inputs: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let params: Vec<Parameter> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| Parameter::new(format!("input{}", i), t.clone()))
        .collect();
    let eval = |values: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();

    let mut worst: f64 = 0.0;
    for (k, p) in params.iter().enumerate() {
        let analytic = grads
            .for_param(p.id())
            .unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        let mut numeric = vec![0.0; inputs[k].numel()];
        for (idx, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].values_mut()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].values_mut()[idx] -= FD_STEP;
            *slot = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Same as [`check_gradient`] for the parameters of a model, perturbed in
/// place on clones.
pub fn check_model_gradient<M: Clone>(
    model: &M,
    params: impl Fn(&mut M) -> Vec<&mut Parameter>,
    loss: impl Fn(&M, &mut Tape) -> Var,
) -> f64 {
    let mut tape = Tape::new();
    let out = loss(model, &mut tape);
    let grads = tape.backward(out).unwrap();
    let mut probe = model.clone();
    let count = params(&mut probe).len();
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let (id, base) = {
            let mut m = model.clone();
            let p = &params(&mut m)[k];
            (p.id(), p.tensor().clone())
        };
        let analytic = grads.for_param(id).unwrap_or_else(|| vec![0.0; base.numel()]);
        let mut numeric = vec![0.0; base.numel()];
        for (idx, slot) in numeric.iter_mut().enumerate() {
            let at = |delta: f64| {
                let mut m = model.clone();
                let mut t = base.clone();
                t.values_mut()[idx] += delta;
                params(&mut m)[k].assign(t).unwrap();
                let mut tape = Tape::new();
                let out = loss(&m, &mut tape);
                tape.value(out).item().unwrap()
            };
            *slot = (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Parameter values of a layer by name.
pub fn layer_tensor(layer: &GatLayer, name: &str) -> Tensor {
    layer
        .checkpoint()
        .get(&format!("layer{}.{}", layer.index(), name))
        .unwrap_or_else(|| panic!("no parameter {}", name))
        .clone()
}

fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Full-neighborhood GAT layer written with plain loops over a dense
/// adjacency matrix. Also returns the attention weights as a dense matrix
/// per head (`alpha[h][i][j]` for edge `j → i`).
pub fn dense_gat(layer: &GatLayer, g: &Graph, x: &Tensor) -> (Tensor, Vec<Vec<Vec<f64>>>) {
    let n = g.num_nodes();
    let adj = dense_adjacency(g);
    let heads = layer.heads();
    let k = layer.width() / heads;
    let slope = 0.2;
    let mut out = vec![vec![0.0; layer.width()]; n];
    let mut alphas = Vec::new();
    for h in 0..heads {
        let w = layer_tensor(layer, &format!("head{}.weight", h));
        let a_src = layer_tensor(layer, &format!("head{}.attn_src", h));
        let a_dst = layer_tensor(layer, &format!("head{}.attn_dst", h));
        let z: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..k)
                    .map(|c| (0..x.cols()).map(|f| x.get(i, f) * w.get(f, c)).sum())
                    .collect()
            })
            .collect();
        let dot = |v: &[f64], a: &Tensor| -> f64 { v.iter().zip(a.values()).map(|(p, q)| p * q).sum() };
        let mut alpha = vec![vec![0.0; n]; n];
        for i in 0..n {
            let nbrs: Vec<usize> = (0..n).filter(|&j| adj[i][j] != 0.0).collect();
            if nbrs.is_empty() {
                continue;
            }
            let scores: Vec<f64> = nbrs
                .iter()
                .map(|&j| {
                    let e = dot(&z[j], &a_src) + dot(&z[i], &a_dst);
                    if e >= 0.0 {
                        e
                    } else {
                        slope * e
                    }
                })
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for (&j, s) in nbrs.iter().zip(&scores) {
                alpha[i][j] = (s - max).exp() / total;
                for c in 0..k {
                    out[i][h * k + c] += alpha[i][j] * z[j][c];
                }
            }
        }
        alphas.push(alpha);
    }
    let skip = layer_tensor(layer, "skip.weight");
    let bias = layer_tensor(layer, "bias");
    for i in 0..n {
        for c in 0..layer.width() {
            let s: f64 = (0..x.cols()).map(|f| x.get(i, f) * skip.get(f, c)).sum();
            out[i][c] = elu(out[i][c] + s + bias.values()[c]);
        }
    }
    (Tensor::from_rows(&out).unwrap(), alphas)
}

pub type Rows = Vec<Vec<f64>>;

pub fn rows(t: &Tensor) -> Rows {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// Heads with random biases so every parameter shows up in the oracle.
pub fn random_heads(width: usize, seed: u64) -> HeadPair {
    let mut r = rng(seed);
    let mut heads = HeadPair::new("h", width, &mut r);
    for p in heads.parameters_mut() {
        if p.name().ends_with("bias") {
            p.assign(rand_vector(&mut r, width, -0.5, 0.5)).unwrap();
        }
    }
    heads
}

pub fn oracle_mlp(head: &ReconstructionHead, x: &Rows) -> Rows {
    let p = head.parameters();
    let (w1, b1, w2, b2) = (p[0].tensor(), p[1].values(), p[2].tensor(), p[3].values());
    let d = b1.len();
    x.iter()
        .map(|row| {
            let hidden: Vec<f64> = (0..d)
                .map(|c| {
                    let z = b1[c] + (0..row.len()).map(|k| row[k] * w1.get(k, c)).sum::<f64>();
                    if z >= 0.0 {
                        z
                    } else {
                        z.exp() - 1.0
                    }
                })
                .collect();
            (0..d).map(|c| b2[c] + (0..d).map(|k| hidden[k] * w2.get(k, c)).sum::<f64>()).collect()
        })
        .collect()
}

pub fn oracle_mse(a: &Rows, b: &Rows) -> f64 {
    let total: f64 = a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q))).sum();
    total / a.len() as f64
}

pub fn oracle_cov(x: &Rows) -> Rows {
    let (n, d) = (x.len(), x[0].len());
    let mean: Vec<f64> = (0..d).map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| x.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n as f64)
                .collect()
        })
        .collect()
}

pub fn oracle_var_term(c: &Rows) -> f64 {
    c.iter().enumerate().map(|(i, r)| (1.0 - r[i]).powi(2)).sum::<f64>() / c.len() as f64
}

pub fn oracle_cov_term(c: &Rows) -> f64 {
    let mut s = 0.0;
    for (i, r) in c.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            if i != j {
                s += v * v;
            }
        }
    }
    s / c.len() as f64
}

pub fn oracle_rgi_terms(u: &Tensor, v: &Tensor, heads: &HeadPair, w: &LossWeights) -> RgiLossTerms {
    let (u, v) = (rows(u), rows(v));
    let (cu, cv) = (oracle_cov(&u), oracle_cov(&v));
    let mut t = RgiLossTerms {
        rec_u: oracle_mse(&u, &oracle_mlp(&heads.phi, &v)),
        rec_v: oracle_mse(&v, &oracle_mlp(&heads.psi, &u)),
        var_u: oracle_var_term(&cu),
        var_v: oracle_var_term(&cv),
        cov_u: oracle_cov_term(&cu),
        cov_v: oracle_cov_term(&cv),
        total: 0.0,
    };
    t.total = w.rec * (t.rec_u + t.rec_v) + w.var * (t.var_u + t.var_v) + w.cov * (t.cov_u + t.cov_v);
    t
}
