//! Deterministic, counter-based random-number streams.
//!
//! Hierarchical samplers spawn nested subchains, and every nesting must be
//! reproducible from a single 64-bit seed regardless of platform or thread
//! count. Instead of threading one sequential generator through the
//! recursion, each chain, level and iteration derives its own stream by
//! mixing the parent seed with a counter. Running a subchain longer never
//! perturbs the draws of its siblings or ancestors.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// The generator used throughout the crate. ChaCha8 is cheap to seed,
/// platform-independent and has no rejection-sampling warmup.
pub type ChainRng = ChaCha8Rng;

/// SplitMix64 finalizer. Statistically independent outputs for distinct
/// inputs, which is all stream derivation needs.
#[inline]
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A point in the stream tree. Copy-cheap; splitting never mutates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamSeed(u64);

impl StreamSeed {
    pub fn root(seed: u64) -> Self {
        StreamSeed(mix(seed, 0x6d6c_6461_726f_6f74))
    }

    /// Derive the child stream with the given counter.
    pub fn child(self, index: u64) -> Self {
        StreamSeed(mix(self.0, index))
    }

    /// Instantiate a generator at this point of the tree.
    pub fn rng(self) -> ChainRng {
        ChainRng::seed_from_u64(self.0)
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// Per-iteration draws (proposal, acceptance test) for iteration `j`.
#[inline]
pub fn iteration_rng(stream: StreamSeed, j: u64) -> ChainRng {
    stream.child(2 * j).rng()
}

/// Stream seed handed to the subchain spawned at iteration `j`.
#[inline]
pub fn subchain_stream(stream: StreamSeed, j: u64) -> StreamSeed {
    stream.child(2 * j + 1)
}
