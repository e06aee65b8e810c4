//! Seed derivation. Every random consumer gets its own ChaCha stream keyed by
//! the root seed and a path of small integers, so results do not depend on
//! construction order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut h = splitmix(seed ^ 0x6b6e_6170_636f_756e);
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x51)));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        h = splitmix(h.wrapping_add(i as u64));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    StreamRng::from_seed(key)
}

/// Child stream drawn from a parent generator.
pub fn fork<R: rand::Rng + ?Sized>(rng: &mut R, tag: u64) -> StreamRng {
    stream(rng.next_u64(), &[tag])
}
