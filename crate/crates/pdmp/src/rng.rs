//! Splittable deterministic random streams.
//!
//! Every consumer of randomness receives a stream derived from a master seed
//! plus a path of indices (chain, window, ...). Derivation is a SplitMix64
//! mix of the path, which keys a ChaCha8 stream. Identical (seed, path)
//! always yields bit-identical draws, independent of thread scheduling —
//! this is what makes event skeletons replayable and common-random-number
//! couplings well defined.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 output step.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a master seed and a path of stream indices into a 256-bit ChaCha key.
pub fn stream(master_seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = master_seed ^ 0x6a09e667f3bcc908;
    let mut acc = splitmix64(&mut state);
    for &ix in path {
        state ^= ix.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(1);
        acc ^= splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    let mut s = acc;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stream for chain `k` of a multi-chain run.
pub fn chain_stream(master_seed: u64, chain: u64) -> ChaCha8Rng {
    stream(master_seed, &[0x434841494e, chain])
}
