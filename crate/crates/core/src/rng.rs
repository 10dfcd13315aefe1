//! Deterministic random substreams.
//!
//! Every stochastic stage draws from a ChaCha8 stream keyed by
//! `(seed, domain)` and selected by an index (chain number, posterior draw
//! index, ...). Parallel work therefore produces the same numbers no matter
//! how it is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains. Values are part of the reproducibility contract.
pub mod domain {
    pub const CHAIN: u64 = 0x6368_6169_6e00_0001;
    pub const KMEANS: u64 = 0x6b6d_6561_6e73_0002;
    pub const PREDICT: u64 = 0x7072_6564_6963_0003;
    pub const TEAM_PICK: u64 = 0x7465_616d_7069_0004;
    pub const SIMULATE: u64 = 0x7369_6d75_6c61_0005;
    pub const EPAA_PLAYER: u64 = 0x6570_6161_706c_0006;
    pub const EPAA_TEAM: u64 = 0x6570_6161_746d_0007;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a domain tag into a new 64-bit seed.
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    let mut s = seed ^ domain.rotate_left(17);
    splitmix64(&mut s);
    splitmix64(&mut s)
}

/// Independent stream number `index` within `(seed, domain)`.
pub fn substream(seed: u64, domain: u64, index: u64) -> StreamRng {
    let mut state = seed ^ domain.rotate_left(29);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
