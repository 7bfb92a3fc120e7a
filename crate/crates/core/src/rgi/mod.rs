//! The RGI objective and the trainer for a single module.

mod loss;
mod train;

pub use loss::{
    covariance_loss, rgi_loss, variance_loss, LossWeights, Reconstructor, ReconstructionHead,
    RgiLoss, RgiLossTerms,
};
pub use train::{
    rgi_step, train_rgi_module, HeadPair, RgiBatch, RgiEncoder, RgiHistory, TrainConfig,
};
