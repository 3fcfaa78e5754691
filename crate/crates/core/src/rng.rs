//! Named random streams derived from one master seed.
//!
//! Every consumer draws from its own ChaCha stream, so adding draws in one
//! place never shifts the numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Environment,
    Evaluation,
    EvalExploration,
    WeightInit(usize),
    Exploration(usize),
    Replay(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Environment => 0,
            Stream::Evaluation => 1,
            Stream::EvalExploration => 2,
            Stream::WeightInit(k) => 16 + 4 * k as u64,
            Stream::Exploration(k) => 17 + 4 * k as u64,
            Stream::Replay(k) => 18 + 4 * k as u64,
        }
    }
}

pub fn stream(master_seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(which.id());
    rng
}
