//! Repo-wide seeded random streams.
//!
//! Every stochastic component draws from ChaCha8 (rand_chacha 0.9) keyed by
//! the experiment seed, with a distinct ChaCha stream id per consumer. Two
//! consumers sharing a seed therefore never observe correlated draws, and the
//! draws of one consumer never depend on how many numbers another consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name and version of the generator, recorded in run outputs.
pub const GENERATOR: &str = "chacha8/rand_chacha-0.9";

/// Stream ids. Changing any of these changes every recorded result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    RandomSearch = 1,
    Cmaes = 2,
    BayesOpt = 3,
    GroundTruthOracle = 4,
    Spsa = 5,
    HiddenTheta = 6,
    ObservationNoise = 7,
    GpHyper = 8,
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// A stream further keyed by a round/sub-index, for consumers that must be
/// a pure function of (seed, round).
pub fn rng_indexed(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = rng(seed, stream);
    rng.set_word_pos(u128::from(index) << 32);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_differ_for_same_seed() {
        let a: u64 = rng(3, Stream::Init).random();
        let b: u64 = rng(3, Stream::RandomSearch).random();
        assert_ne!(a, b);
    }

    #[test]
    fn indexed_streams_are_reproducible_and_distinct() {
        let a: f64 = rng_indexed(1, Stream::Spsa, 4).random();
        let b: f64 = rng_indexed(1, Stream::Spsa, 4).random();
        let c: f64 = rng_indexed(1, Stream::Spsa, 5).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
