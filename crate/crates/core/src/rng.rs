//! Named, seed-derived random streams.
//!
//! Every random decision in a run is drawn from a ChaCha stream keyed by the
//! run seed, a stream name, and an index, so independent consumers never
//! share state and reruns are bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent generator for `(seed, name, index)`.
pub fn substream(seed: u64, name: &str, index: u64) -> Rng {
    // FNV-1a over the name
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let key = splitmix(splitmix(seed ^ h).wrapping_add(index));
    ChaCha8Rng::seed_from_u64(key)
}
