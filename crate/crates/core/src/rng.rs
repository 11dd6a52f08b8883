//! Seeded random streams.
//!
//! Every source of randomness is a ChaCha8 stream derived from a single run
//! seed and a named stream id, so runs are reproducible and checkpoints can
//! capture the exact generator position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Named sub-streams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Env = 1,
    Policy = 2,
    Learner = 3,
    Eval = 4,
    InitInner = 5,
    InitQuery = 6,
    InitKeys = 7,
    InitCritic = 8,
    InitKnowledgeKeys = 9,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Env => "env",
            Stream::Policy => "policy",
            Stream::Learner => "learner",
            Stream::Eval => "eval",
            Stream::InitInner => "init-inner",
            Stream::InitQuery => "init-query",
            Stream::InitKeys => "init-keys",
            Stream::InitCritic => "init-critic",
            Stream::InitKnowledgeKeys => "init-knowledge-keys",
        }
    }
}

/// Builds the generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Exact position of a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

pub fn standard_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // location 0, scale 1 is always a valid parameterization
    Gumbel::new(0.0, 1.0).expect("unit gumbel").sample(rng)
}

pub fn uniform_symmetric<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    rng.random_range(-bound..=bound)
}
