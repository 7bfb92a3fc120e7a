//! Checks reverse-mode gradients of a GAT layer and of the regularized loss
//! against central differences.
//!
//! cargo run --example gradcheck

use lrgi::encoder::GatLayer;
use lrgi::graph::{full_block, Graph};
use lrgi::numerics::{Parameter, Tape, Tensor, Var};
use lrgi::rgi::{rgi_loss, LossWeights, ReconstructionHead};
use lrgi::rng::{stream, Stage};
use rand::Rng;

const STEP: f64 = 1e-5;

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-5)
}

/// Worst relative error over all parameters returned by `params`.
fn check<M: Clone>(model: &M, params: impl Fn(&mut M) -> Vec<&mut Parameter>, loss: impl Fn(&M, &mut Tape) -> Var) -> f64 {
    let mut tape = Tape::new();
    let out = loss(model, &mut tape);
    let grads = tape.backward(out).unwrap();
    let mut scratch = model.clone();
    let count = params(&mut scratch).len();
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let mut copy = model.clone();
        let (id, base) = {
            let p = &params(&mut copy)[k];
            (p.id(), p.tensor().clone())
        };
        let analytic = grads.for_param(id).unwrap_or_else(|| vec![0.0; base.numel()]);
        let numeric: Vec<f64> = (0..base.numel())
            .map(|idx| {
                let at = |delta: f64| {
                    let mut m = model.clone();
                    let mut t = base.clone();
                    t.values_mut()[idx] += delta;
                    params(&mut m)[k].assign(t).unwrap();
                    let mut tape = Tape::new();
                    let out = loss(&m, &mut tape);
                    tape.value(out).item().unwrap()
                };
                (at(STEP) - at(-STEP)) / (2.0 * STEP)
            })
            .collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

fn main() -> lrgi::Result<()> {
    let mut rng = stream(0, Stage::Init, 0);
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)];
    let features = Tensor::matrix(6, 3, (0..18).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let g = Graph::from_edges(6, &edges, false)?.with_features(features)?;
    let block = full_block(&g);

    let layer = GatLayer::new(1, 3, 8, 2, 0.2, &mut rng)?;
    let mix = Tensor::matrix(6, 8, (0..48).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let err = check(&layer, |l| l.parameters_mut(), |l, tape| {
        let x = tape.constant(g.features().clone());
        let out = l.forward(tape, x, &block).unwrap();
        let w = tape.constant(mix.clone());
        let prod = tape.mul(out, w).unwrap();
        tape.sum(prod)
    });
    println!("gat layer       max relative error {:.2e}", err);

    let u = Tensor::matrix(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let v = Tensor::matrix(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let heads = (ReconstructionHead::new("phi", 4, &mut rng), ReconstructionHead::new("psi", 4, &mut rng));
    let err = check(
        &heads,
        |(phi, psi)| {
            let mut all = phi.parameters_mut();
            all.extend(psi.parameters_mut());
            all
        },
        |(phi, psi), tape| {
            let (uv, vv) = (tape.constant(u.clone()), tape.constant(v.clone()));
            rgi_loss(tape, uv, vv, phi, psi, &LossWeights::PPI).unwrap().total
        },
    );
    println!("regularized loss max relative error {:.2e}", err);
    Ok(())
}
