//! Seed hierarchy.
//!
//! A single run seed is split into independent ChaCha streams, one per
//! (stage, index) pair, so any sub-stage can be rerun on its own and still
//! draw the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Dataset,
    Init,
    Heads,
    Train,
    Sampling,
    Probe,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Dataset => 1,
            Stage::Init => 2,
            Stage::Heads => 3,
            Stage::Train => 4,
            Stage::Sampling => 5,
            Stage::Probe => 6,
        }
    }
}

/// Independent RNG for `stage` and `index` under `seed`.
pub fn stream(seed: u64, stage: Stage, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stage.tag() << 48) ^ index);
    rng
}
