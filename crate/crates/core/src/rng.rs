//! Named random substreams.
//!
//! A single run seed fans out into independent streams keyed by a stage name
//! and a few integers (epoch, entry hash, ...). Toggling one stage never
//! shifts the draws of another, and per-item streams make results
//! independent of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET, bytes)
}

fn fnv1a_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Stable hash of an entry id, used as a stream coordinate.
pub fn id_key(id: &str) -> u64 {
    fnv1a(id.as_bytes())
}

/// Stream for `(seed, stage, coords...)`.
pub fn substream(seed: u64, stage: &str, coords: &[u64]) -> StreamRng {
    let mut h = fnv1a_extend(FNV_OFFSET, &seed.to_le_bytes());
    h = fnv1a_extend(h, stage.as_bytes());
    for c in coords {
        h = fnv1a_extend(h, &c.to_le_bytes());
    }
    // One avalanche round; FNV alone leaves low bits weakly mixed.
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    StreamRng::seed_from_u64(h)
}
