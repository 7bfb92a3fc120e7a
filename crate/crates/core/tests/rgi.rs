mod common;

use common::{
    check_gradient, check_model_gradient, oracle_cov, oracle_rgi_terms, rand_tensor, random_graph, random_heads, rng, rows,
};
use lrgi::encoder::{full_graph_layer_inference, Encoder, EncoderConfig, GatLayer};
use lrgi::graph::{generate_sbm, propagate, Fanout, Graph, SbmConfig};
use lrgi::numerics::{AdamConfig, Tape, Tensor, Var};
use lrgi::rgi::{
    rgi_loss, rgi_step, train_rgi_module, HeadPair, LossWeights, Reconstructor, ReconstructionHead, RgiBatch,
    RgiLossTerms, TrainConfig,
};
use lrgi::rng::{stream, Stage};
use lrgi::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn loss_terms(u: &Tensor, v: &Tensor, heads: &HeadPair, w: &LossWeights) -> RgiLossTerms {
    let mut tape = Tape::new();
    let (uv, vv) = (tape.constant(u.clone()), tape.constant(v.clone()));
    rgi_loss(&mut tape, uv, vv, &heads.phi, &heads.psi, w).unwrap().terms
}

fn terms_array(t: &RgiLossTerms) -> [f64; 7] {
    [t.rec_u, t.rec_v, t.var_u, t.var_v, t.cov_u, t.cov_v, t.total]
}

fn small_config(epochs: usize, batch: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: batch,
        conv_fanout: Fanout::Limit(5),
        prop_fanout: Fanout::Limit(3),
        adam: AdamConfig::default().with_learning_rate(1e-3),
        ..TrainConfig::default()
    }
}

#[test]
fn loss_matches_independent_recomputation() {
    let mut r = rng(30);
    for trial in 0..12 {
        let n = r.random_range(3..=50);
        let g = random_graph(&mut r, n, 0.2, 0);
        let u = rand_tensor(&mut r, n, 6, -2.0, 2.0);
        let v = propagate(&u, &g, 1).unwrap();
        let heads = random_heads(6, trial);
        let w = LossWeights::new(r.random_range(0.0..30.0), r.random_range(0.0..30.0), r.random_range(0.0..30.0));
        let got = terms_array(&loss_terms(&u, &v, &heads, &w));
        let expect = terms_array(&oracle_rgi_terms(&u, &v, &heads, &w));
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10, "trial {}: {:?} vs {:?}", trial, got, expect);
        }
    }
}

#[test]
fn whitened_identical_views_only_pay_reconstruction() {
    // Columns ±1 in orthogonal sign patterns: zero mean, identity covariance.
    let u = Tensor::from_rows(&[
        vec![1.0, 1.0],
        vec![1.0, -1.0],
        vec![-1.0, 1.0],
        vec![-1.0, -1.0],
    ])
    .unwrap();
    let heads = random_heads(2, 1);
    let t = loss_terms(&u, &u, &heads, &LossWeights::PPI);
    assert!(t.var_u.abs() < 1e-15 && t.cov_u.abs() < 1e-15);
    assert!((t.total - 25.0 * (t.rec_u + t.rec_v)).abs() < 1e-12);
}

#[test]
fn shape_mismatch_is_dimension_error() {
    let heads = random_heads(2, 2);
    let mut tape = Tape::new();
    let u = tape.constant(Tensor::zeros(vec![3, 2]));
    let v = tape.constant(Tensor::zeros(vec![4, 2]));
    let r = rgi_loss(&mut tape, u, v, &heads.phi, &heads.psi, &LossWeights::PPI);
    assert!(matches!(r, Err(Error::Dimension(_))));
}

#[test]
fn head_gradients_match_differences() {
    let mut r = rng(31);
    for trial in 0..3 {
        let x = rand_tensor(&mut r, 5, 4, -2.0, 2.0);
        let weights = rand_tensor(&mut r, 5, 4, -1.0, 1.0);
        let head = random_heads(4, 40 + trial).phi;
        let loss = |h: &ReconstructionHead, tape: &mut Tape| -> Var {
            let xv = tape.constant(x.clone());
            let y = h.reconstruct(tape, xv).unwrap();
            let w = tape.constant(weights.clone());
            let p = tape.mul(y, w).unwrap();
            tape.sum(p)
        };
        let err = check_model_gradient(&head, |h| h.parameters_mut(), loss);
        assert!(err < 1e-4, "{}", err);
    }
}

#[test]
fn full_loss_gradients_match_differences() {
    let mut r = rng(32);
    for trial in 0..3 {
        let u = rand_tensor(&mut r, 6, 3, -2.0, 2.0);
        let v = rand_tensor(&mut r, 6, 3, -2.0, 2.0);
        let heads = random_heads(3, 50 + trial);
        let w = LossWeights::PPI;
        let err = check_gradient(&[u.clone(), v.clone()], |tape, vars| {
            rgi_loss(tape, vars[0], vars[1], &heads.phi, &heads.psi, &w).unwrap().total
        });
        assert!(err < 1e-4, "views: {}", err);
        let err = check_model_gradient(&heads, |h| h.parameters_mut(), |h, tape| {
            let (uv, vv) = (tape.constant(u.clone()), tape.constant(v.clone()));
            rgi_loss(tape, uv, vv, &h.phi, &h.psi, &w).unwrap().total
        });
        assert!(err < 1e-4, "heads: {}", err);
    }
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let g = random_graph(&mut rng(33), 30, 0.2, 4);
    let before = GatLayer::new(1, 4, 8, 2, 0.2, &mut stream(0, Stage::Init, 1)).unwrap();
    let mut layers = vec![before.clone()];
    let mut heads = random_heads(8, 3);
    let cfg = small_config(0, 16);
    let h = train_rgi_module(layers.as_mut_slice(), &mut heads, &g, g.features(), &cfg, &mut rng(0)).unwrap();
    assert_eq!(h.steps(), 0);
    assert_eq!(layers[0].checkpoint().to_text(), before.checkpoint().to_text());
}

#[test]
fn single_step_moves_every_parameter_group() {
    let g = random_graph(&mut rng(34), 30, 0.3, 4);
    let mut layers = vec![GatLayer::new(1, 4, 8, 2, 0.2, &mut stream(0, Stage::Init, 1)).unwrap()];
    let before = layers[0].checkpoint();
    let mut heads = random_heads(8, 4);
    let cfg = small_config(1, 30);
    let targets: Vec<usize> = (0..30).collect();
    let batch = RgiBatch::sample(&g, &targets, 1, &cfg, &mut rng(1)).unwrap();
    let terms = rgi_step(layers.as_mut_slice(), &mut heads, g.features(), &batch, &cfg).unwrap();
    assert!(terms.total.is_finite());
    let after = layers[0].checkpoint();
    for ((name, a), (_, b)) in before.entries().iter().zip(after.entries()) {
        assert_ne!(a, b, "{} did not move", name);
    }
    assert!(layers[0].parameters().iter().all(|p| p.grad_is_zero()));
}

#[test]
fn training_on_two_block_sbm_lowers_the_loss() {
    let g = generate_sbm(&SbmConfig {
        nodes_per_block: 50,
        blocks: 2,
        p_in: 0.2,
        p_out: 0.02,
        feature_dim: 4,
        ..SbmConfig::default()
    })
    .unwrap();
    let mut enc = Encoder::new(EncoderConfig::new(4, 1, 8), 0).unwrap();
    let mut heads = HeadPair::new("h", 8, &mut stream(0, Stage::Heads, 1));
    let cfg = small_config(200, 32);
    let h = train_rgi_module(enc.layers_mut(), &mut heads, &g, g.features(), &cfg, &mut stream(0, Stage::Train, 1))
        .unwrap();
    assert_eq!(h.epochs.len(), 200);
    let (first, last) = (h.epochs[0].total, h.epochs[199].total);
    assert!(last < first, "loss went from {} to {}", first, last);
}

#[test]
fn fixed_seed_reproduces_history_with_and_without_prefetch() {
    let g = random_graph(&mut rng(35), 60, 0.1, 4);
    let run = |prefetch: usize| {
        let mut layers = vec![GatLayer::new(1, 4, 8, 2, 0.2, &mut stream(1, Stage::Init, 1)).unwrap()];
        let mut heads = HeadPair::new("h", 8, &mut stream(1, Stage::Heads, 1));
        let cfg = TrainConfig { prefetch, ..small_config(5, 16) };
        let h = train_rgi_module(layers.as_mut_slice(), &mut heads, &g, g.features(), &cfg, &mut stream(1, Stage::Train, 1))
            .unwrap();
        (h, layers[0].checkpoint().to_text())
    };
    let a = run(2);
    let b = run(2);
    let c = run(0);
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let bits = |h: &lrgi::rgi::RgiHistory| h.batch_totals.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&c.0));
    assert_eq!(a.1, c.1);
}

#[test]
fn covariance_terms_alone_whiten_the_output() {
    let n = 512;
    let mut r = rng(36);
    let x = rand_tensor(&mut r, n, 8, -2.0, 2.0);
    let g = Graph::from_edges(n, &[], false).unwrap().with_features(x).unwrap();
    let mut layers = vec![GatLayer::new(1, 8, 8, 2, 0.2, &mut stream(2, Stage::Init, 1)).unwrap()];
    let mut heads = HeadPair::new("h", 8, &mut stream(2, Stage::Heads, 1));
    let cfg = TrainConfig {
        weights: LossWeights::new(0.0, 25.0, 20.0),
        adam: AdamConfig::default().with_learning_rate(1e-2),
        ..small_config(100, 256)
    };
    train_rgi_module(layers.as_mut_slice(), &mut heads, &g, g.features(), &cfg, &mut stream(2, Stage::Train, 1)).unwrap();
    let out = full_graph_layer_inference(&layers[0], &g, g.features()).unwrap();
    let c = oracle_cov(&rows(&out));
    let mut off = 0.0;
    for i in 0..8 {
        assert!((0.5..=1.5).contains(&c[i][i]), "diagonal {} = {}", i, c[i][i]);
        for j in 0..8 {
            if i != j {
                off += c[i][j].abs();
            }
        }
    }
    let off = off / 56.0;
    assert!(off < 0.1, "mean off-diagonal {}", off);
}

#[test]
fn invalid_configs_are_rejected() {
    let g = random_graph(&mut rng(37), 10, 0.3, 2);
    let mut layers = vec![GatLayer::new(1, 2, 4, 2, 0.2, &mut stream(0, Stage::Init, 1)).unwrap()];
    let mut heads = random_heads(4, 5);
    for cfg in [
        TrainConfig { batch_size: 1, ..small_config(1, 2) },
        TrainConfig { prop_steps: 0, ..small_config(1, 4) },
        TrainConfig { weights: LossWeights::new(0.0, 0.0, 0.0), ..small_config(1, 4) },
    ] {
        let r = train_rgi_module(layers.as_mut_slice(), &mut heads, &g, g.features(), &cfg, &mut rng(0));
        assert!(matches!(r, Err(Error::Config(_))));
    }
    let wrong = Tensor::zeros(vec![9, 2]);
    let r = train_rgi_module(layers.as_mut_slice(), &mut heads, &g, &wrong, &small_config(1, 4), &mut rng(0));
    assert!(matches!(r, Err(Error::Dimension(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn total_is_the_weighted_sum_of_nonnegative_terms(
        n in 2usize..20, d in 1usize..5, seed in any::<u64>(),
        rec in 0.0f64..50.0, var in 0.0f64..50.0, cov in 0.1f64..50.0,
    ) {
        let mut r = rng(seed);
        let u = rand_tensor(&mut r, n, d, -2.0, 2.0);
        let v = rand_tensor(&mut r, n, d, -2.0, 2.0);
        let heads = random_heads(d, seed);
        let w = LossWeights::new(rec, var, cov);
        let t = loss_terms(&u, &v, &heads, &w);
        for term in [t.rec_u, t.rec_v, t.var_u, t.var_v, t.cov_u, t.cov_v] {
            prop_assert!(term >= 0.0);
        }
        prop_assert!((t.total - t.weighted_total(&w)).abs() <= 1e-12 * t.total.max(1.0));
    }

    #[test]
    fn loss_ignores_batch_order(n in 2usize..20, seed in any::<u64>()) {
        let mut r = rng(seed);
        let u = rand_tensor(&mut r, n, 3, -2.0, 2.0);
        let v = rand_tensor(&mut r, n, 3, -2.0, 2.0);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let heads = random_heads(3, seed);
        let a = loss_terms(&u, &v, &heads, &LossWeights::PPI);
        let b = loss_terms(&u.select_rows(&perm).unwrap(), &v.select_rows(&perm).unwrap(), &heads, &LossWeights::PPI);
        prop_assert!((a.total - b.total).abs() < 1e-10 * a.total.max(1.0));
    }
}
