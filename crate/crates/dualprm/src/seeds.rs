//! Deterministic derivation of named RNG streams.
//!
//! Every random draw in the pipeline comes from a stream addressed by a
//! base seed plus a list of string components (a component name, an entity
//! id, a rollout index, ...). Streams are independent ChaCha8 generators
//! seeded from a SHA-256 digest of the address, so:
//!
//! * the same address always yields the same stream, on every platform;
//! * distinct addresses yield statistically independent streams;
//! * parallel consumers can draw from per-entity streams in any order
//!   without perturbing each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a 32-byte seed from `base` and the address `parts`.
///
/// Each part is length-prefixed before hashing, so `["ab", "c"]` and
/// `["a", "bc"]` address different streams.
pub fn derive_seed(base: u64, parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hasher.finalize().into()
}

/// Returns the ChaCha8 stream addressed by `(base, parts)`.
pub fn derive_rng(base: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(base, parts))
}

/// Collapses the stream address to a single `u64` sub-seed.
///
/// Used where a component (world, labeler, trainer) wants one seed of its
/// own: changing one component's name or the base seed changes only that
/// component's stream.
pub fn derive_subseed(base: u64, component: &str) -> u64 {
    let digest = derive_seed(base, &[component]);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
