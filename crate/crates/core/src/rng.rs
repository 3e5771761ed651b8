//! Seeded random streams.
//!
//! Search reproducibility hinges on never sharing a stream between workers:
//! each candidate gets a stream derived from its parent's position and its
//! own index, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SearchRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(base), |h, &p| splitmix(h ^ splitmix(p)))
}

/// A child stream of `rng` keyed by `index`; `rng` itself is not advanced.
pub fn fork(rng: &SearchRng, index: u64) -> SearchRng {
    let mut h = splitmix(index ^ 0xA076_1D64_78BD_642F);
    for chunk in rng.get_seed().chunks_exact(8) {
        h = splitmix(h ^ u64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let pos = rng.get_word_pos();
    h = splitmix(h ^ rng.get_stream());
    h = splitmix(h ^ pos as u64);
    h = splitmix(h ^ (pos >> 64) as u64);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        h = splitmix(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
