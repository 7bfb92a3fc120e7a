use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{stream, Stage};

use super::{Graph, Labels, Split};

/// Stochastic block model with planted-community features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub nodes_per_block: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Magnitude of the one-hot community component of each feature row.
    pub signal: f64,
    /// Standard deviation of the Gaussian feature noise.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            nodes_per_block: 400,
            blocks: 4,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 8,
            signal: 1.0,
            feature_noise: 1.0,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn num_nodes(&self) -> usize {
        self.nodes_per_block * self.blocks
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return Err(Error::contract(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.blocks == 0 || self.nodes_per_block == 0 {
            return Err(Error::contract("SBM needs at least one non-empty block"));
        }
        if self.feature_dim < self.blocks {
            return Err(Error::contract(format!(
                "feature_dim {} cannot hold a one-hot code for {} blocks",
                self.feature_dim, self.blocks
            )));
        }
        if self.feature_noise.is_nan() || self.feature_noise < 0.0 {
            return Err(Error::contract("feature noise must be non-negative"));
        }
        Ok(())
    }
}

/// Samples an undirected SBM graph. Node `i` belongs to block
/// `i / nodes_per_block`; features are `signal·onehot(block) + N(0, σ²)`;
/// labels are block ids; nodes are split 60/20/20 at random.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.num_nodes();
    let block = |i: usize| i / cfg.nodes_per_block;

    let mut rng = stream(cfg.seed, Stage::Dataset, 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block(i) == block(j) { cfg.p_in } else { cfg.p_out };
            if p > 0.0 && rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let mut rng = stream(cfg.seed, Stage::Dataset, 1);
    let noise = Normal::new(0.0, cfg.feature_noise).map_err(|e| Error::contract(e.to_string()))?;
    let d = cfg.feature_dim;
    let mut features = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            let base = if j == block(i) { cfg.signal } else { 0.0 };
            features[i * d + j] = base + noise.sample(&mut rng);
        }
    }

    let mut rng = stream(cfg.seed, Stage::Dataset, 2);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (n as f64 * 0.6).round() as usize;
    let n_val = (n as f64 * 0.2).round() as usize;
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_train {
            splits[i] = Split::Train;
        } else if rank < n_train + n_val {
            splits[i] = Split::Val;
        }
    }

    Graph::from_edges(n, &edges, false)?
        .with_features(Tensor::matrix(n, d, features)?)?
        .with_labels(Labels::Multiclass((0..n).map(block).collect()))?
        .with_splits(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, k: usize, p_in: f64, p_out: f64) -> SbmConfig {
        SbmConfig {
            nodes_per_block: n,
            blocks: k,
            p_in,
            p_out,
            feature_dim: k.max(2),
            signal: 1.0,
            feature_noise: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn two_disjoint_triangles() {
        let g = generate_sbm(&cfg(3, 2, 1.0, 0.0)).unwrap();
        assert_eq!(g.undirected_edges(), vec![(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
    }

    #[test]
    fn no_cross_block_edges_without_p_out() {
        let g = generate_sbm(&cfg(30, 3, 0.3, 0.0)).unwrap();
        assert!(g.undirected_edges().iter().all(|&(a, b)| a / 30 == b / 30));
    }

    #[test]
    fn invalid_probabilities() {
        assert!(generate_sbm(&cfg(3, 2, 0.1, 0.2)).is_err());
        assert!(generate_sbm(&cfg(3, 2, 1.5, 0.2)).is_err());
    }

    #[test]
    fn split_proportions_and_determinism() {
        let c = cfg(50, 2, 0.1, 0.01);
        let g = generate_sbm(&c).unwrap();
        assert_eq!(g.split_nodes(Split::Train).len(), 60);
        assert_eq!(g.split_nodes(Split::Val).len(), 20);
        assert_eq!(g.split_nodes(Split::Test).len(), 20);
        assert_eq!(g, generate_sbm(&c).unwrap());
    }
}
