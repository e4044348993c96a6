//! Counter-based random streams.
//!
//! Every draw in a run comes from a ChaCha8 stream selected by
//! `(seed, step, particle, purpose)`. Streams never share state, so the
//! values a particle sees do not depend on how the work was scheduled, and
//! runs that differ only in a parameter consume identical noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const STEP_BITS: u32 = 24;
const INDEX_BITS: u32 = 32;

/// What a stream is used for. The tag is part of the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    InitPosition = 1,
    InitVelocity = 2,
    PairKey = 3,
    Sigma = 4,
    Tau = 5,
    WallSample = 6,
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    key: [u8; 32],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of replica `replica` from a base seed.
pub fn derive_seed(base: u64, replica: u64) -> u64 {
    let mut s = base ^ replica.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut s)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { seed, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for `(step, index, purpose)`.
    ///
    /// Panics if `step >= 2^24` or `index >= 2^32`; both are far beyond any
    /// run this crate can hold in memory.
    pub fn stream(&self, step: usize, index: usize, purpose: Purpose) -> ChaCha8Rng {
        assert!((step as u64) < (1u64 << STEP_BITS), "step {step} out of range");
        assert!((index as u64) < (1u64 << INDEX_BITS), "index {index} out of range");
        let id = ((step as u64) << (INDEX_BITS + 8)) | ((index as u64) << 8) | purpose as u64;
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(id);
        rng
    }

    /// First uniform draw in `[0, 1)` of a stream.
    pub fn uniform(&self, step: usize, index: usize, purpose: Purpose) -> f64 {
        self.stream(step, index, purpose).random::<f64>()
    }
}

/// Standard normal draw from an existing generator.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
