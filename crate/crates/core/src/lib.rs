//! Layer-wise self-supervised training for graph attention encoders.
//!
//! Each encoder layer is fitted on its own with a regularized graph infomax
//! objective: the layer output of every node (the local view) must be
//! reconstructible from the degree-normalized mean of its neighbors' outputs
//! (the propagated view) and vice versa, while a variance-covariance penalty
//! keeps the embedding dimensions decorrelated and away from collapse.
//! Because a layer only ever sees the cached output of the layer below, a
//! training batch needs a two-hop sampled neighborhood no matter how deep the
//! encoder is.
//!
//! Module map:
//!
//! - [`numerics`]: dense tensors, a define-by-run reverse-mode tape, Adam and
//!   the text checkpoint format.
//! - [`graph`]: CSR graphs, the mean-propagation operator, neighbor
//!   sampling, the stochastic block model generator and dataset files.
//! - [`encoder`]: multi-head GAT layers with linear skip connections and ELU.
//! - [`rgi`]: the symmetrized reconstruction plus variance-covariance loss
//!   and the mini-batch training loop for one module.
//! - [`lrgi`]: the layer-wise orchestrator, its end-to-end counterpart and
//!   inference.
//! - [`eval`]: linear probes and the mean average cosine distance.
//! - [`cli`]: the `lrgi` command line (gen, train, embed, probe, mad, bench).

pub mod cli;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod lrgi;
pub mod numerics;
pub mod rgi;
pub mod rng;

pub use error::{Error, Result};
